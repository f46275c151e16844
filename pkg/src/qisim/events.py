"""Photon events and the trial generator.

Trials are generated in blocks as arrays (:class:`EventTable`); a single
trial's events can be materialised as :class:`PhotonEvent` objects with
:func:`row_events`. Both the scalar matcher and the vectorised engine
consume the same tables, so the only thing that differs between the two
decision paths is the decision code itself.

Background model, per signal photon slot and detection window: the slot
holds the returned photon with probability ``eta`` (target present);
otherwise it holds one background photon with probability ``N_B`` (or a
Poisson(``N_B``) number of them when ``poisson_noise`` is set) in a mode
drawn uniformly from the ``M_B`` noise modes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import SPEED_OF_LIGHT, ExperimentConfig, Hypothesis, Protocol

# Spacing of noise modes that lie outside the signal spectrum, relative to w0.
OFF_BAND_STEP = 1e-4


class Channel(str, enum.Enum):
    IDLER = "Idler"
    SIGNAL_RETURN = "SignalReturn"
    NOISE = "Noise"


class Origin(str, enum.Enum):
    TRIPLET = "Triplet"
    BACKGROUND = "Background"


@dataclass(frozen=True)
class PhotonEvent:
    arrival_time: float
    frequency: float
    channel: Channel
    mode_index: int | None  # 1-based; None for background photons
    truth_origin: Origin


class Click(NamedTuple):
    """What a detector reports: time, frequency, and which arm fired."""

    time: float
    frequency: float
    idler: bool


def strip(events: Sequence[PhotonEvent | Click]) -> list[Click]:
    """Drop provenance; signal returns and noise become indistinguishable."""
    clicks = []
    for ev in events:
        if isinstance(ev, Click):
            clicks.append(ev)
        else:
            clicks.append(Click(ev.arrival_time, ev.frequency, ev.channel is Channel.IDLER))
    return clicks


# origin codes stored in EventTable.click_origin
EMPTY, FROM_TRIPLET, FROM_BACKGROUND = 0, 1, 2


@dataclass
class EventTable:
    """A block of trials; click columns are NaN where no photon arrived.

    ``slot_width`` columns belong to each signal photon slot.
    """

    mode: np.ndarray  # (n,) 0-based mode of the emitted triplet
    idler_time: np.ndarray  # (n,)
    idler_freq: np.ndarray  # (n,)
    click_time: np.ndarray  # (n, C)
    click_freq: np.ndarray  # (n, C)
    click_origin: np.ndarray  # (n, C) int8, EMPTY / FROM_TRIPLET / FROM_BACKGROUND
    slot_width: int

    @property
    def n(self) -> int:
        return len(self.mode)


def signal_spectra(cfg: ExperimentConfig) -> np.ndarray:
    """(3, M) array of idler, photon-2 and photon-3 frequencies per mode."""
    return np.array(cfg.modes, dtype=float).T.reshape(3, -1)


def noise_spectra(cfg: ExperimentConfig) -> np.ndarray:
    """(2, M_B) noise frequencies for the photon-2 and photon-3 slots.

    The noise modes coincide with the signal modes; any beyond ``M`` sit
    outside the signal spectrum.
    """
    spectra = signal_spectra(cfg)[1:]
    M, MB = spectra.shape[1], cfg.noise_modes
    if MB <= M:
        return spectra[:, :MB].copy()
    step = OFF_BAND_STEP * cfg.pump_frequency_w0
    extra = np.arange(1, MB - M + 1) * step
    return np.hstack([spectra, spectra.max(axis=1, keepdims=True) + extra])


def noise_interval(cfg: ExperimentConfig) -> tuple[float, float]:
    """Time span over which background photons arrive."""
    dt, jitter = cfg.coincidence_window_dt, cfg.generation_jitter
    if cfg.noise_timing == "record":
        start = cfg.emission_time_t0
        return start, start + 2 * cfg.max_range / SPEED_OF_LIGHT + dt
    # detection window of width dt around the range bin under test
    start = cfg.return_time - (dt - jitter) / 2
    return start, start + dt


def generate_table(cfg: ExperimentConfig, hypothesis: Hypothesis, protocol: Protocol, n: int,
                   rng: np.random.Generator) -> EventTable:
    """Draw ``n`` independent trials."""
    M = cfg.num_modes_M
    eta, nb, jitter = cfg.reflectivity_eta, cfg.noise_mean_NB, cfg.generation_jitter
    photons = Protocol(protocol).signal_photons
    present = Hypothesis(hypothesis) is Hypothesis.TARGET_PRESENT
    spectra = signal_spectra(cfg)
    noise_freqs = noise_spectra(cfg)
    lo, hi = noise_interval(cfg)

    mode = rng.integers(0, M, size=n)
    idler_time = cfg.emission_time_t0 + rng.uniform(0.0, jitter, size=n)
    idler_freq = spectra[0][mode]

    returned, counts = [], []
    for _ in range(photons):
        ret = rng.random(n) < eta if present else np.zeros(n, dtype=bool)
        if cfg.poisson_noise:
            k = rng.poisson(nb, size=n)
        else:
            k = (rng.random(n) < nb).astype(np.int64)
        k[ret] = 0
        returned.append(ret)
        counts.append(k)
    width = max(1, max(int(k.max(initial=0)) for k in counts))

    shape = (n, photons * width)
    click_time = np.full(shape, np.nan)
    click_freq = np.full(shape, np.nan)
    click_origin = np.zeros(shape, dtype=np.int8)
    T = cfg.return_time
    for s in range(photons):
        cols = slice(s * width, (s + 1) * width)
        ret, k = returned[s], counts[s]
        sig_t = T + rng.uniform(0.0, jitter, size=n)
        noise_t = rng.uniform(lo, hi, size=(n, width))
        noise_f = noise_freqs[s][rng.integers(0, noise_freqs.shape[1], size=(n, width))]
        has_noise = np.arange(width)[None, :] < k[:, None]

        t = np.where(has_noise, noise_t, np.nan)
        f = np.where(has_noise, noise_f, np.nan)
        o = np.where(has_noise, FROM_BACKGROUND, EMPTY).astype(np.int8)
        t[ret, 0] = sig_t[ret]
        f[ret, 0] = spectra[s + 1][mode[ret]]
        o[ret, 0] = FROM_TRIPLET
        click_time[:, cols], click_freq[:, cols], click_origin[:, cols] = t, f, o

    return EventTable(mode, idler_time, idler_freq, click_time, click_freq, click_origin, width)


def row_events(table: EventTable, i: int) -> list[PhotonEvent]:
    """Trial ``i`` as a list of events, idler first, then click columns in order."""
    alpha = int(table.mode[i]) + 1
    events = [PhotonEvent(float(table.idler_time[i]), float(table.idler_freq[i]),
                          Channel.IDLER, alpha, Origin.TRIPLET)]
    for t, f, o in zip(table.click_time[i], table.click_freq[i], table.click_origin[i]):
        if o == FROM_TRIPLET:
            events.append(PhotonEvent(float(t), float(f), Channel.SIGNAL_RETURN, alpha, Origin.TRIPLET))
        elif o == FROM_BACKGROUND:
            events.append(PhotonEvent(float(t), float(f), Channel.NOISE, None, Origin.BACKGROUND))
    return events


def as_generator(rng_stream: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng_stream, np.random.Generator):
        return rng_stream
    return np.random.default_rng(rng_stream)


def generate_trial_events(cfg: ExperimentConfig, hypothesis: Hypothesis, rng_stream,
                          protocol: Protocol = Protocol.ENTANGLED_TWO_PHOTON) -> list[PhotonEvent]:
    """Events of one trial: the idler, any signal returns, and background photons."""
    rng = as_generator(rng_stream)
    return row_events(generate_table(cfg, hypothesis, protocol, 1, rng), 0)
