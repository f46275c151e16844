"""Per-trial coincidence decision.

The matcher only ever sees :class:`~qisim.events.Click` records: event
provenance is stripped on entry, so signal returns and background photons
look the same to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .core import ExperimentConfig, Protocol
from .events import Click, PhotonEvent, strip


@dataclass(frozen=True)
class Rejections:
    window: int = 0
    energy: int = 0
    idler_absence: int = 0


@dataclass(frozen=True)
class TrialOutcome:
    detected: bool
    matched_mode: int | None = None  # 1-based
    arrival_time_T: float | None = None
    diagnostics: Rejections = field(default_factory=Rejections)

    def __post_init__(self):
        if self.detected and self.arrival_time_T is None:
            raise ValueError("a detection needs an arrival time")


def resolve_idler_mode(frequency: float, cfg: ExperimentConfig) -> int | None:
    """0-based mode whose idler frequency is nearest, if within tolerance."""
    best, best_gap = None, None
    for k, triple in enumerate(cfg.modes):
        gap = abs(triple[0] - frequency)
        if best_gap is None or gap < best_gap:
            best, best_gap = k, gap
    if best_gap is not None and best_gap <= cfg.tolerance:
        return best
    return None


def _idler_modes(clicks: Sequence[Click], cfg: ExperimentConfig) -> list[int]:
    # An idler belongs to this trial if it was emitted within the window after t0.
    t0, dt = cfg.emission_time_t0, cfg.coincidence_window_dt
    modes = []
    for c in clicks:
        if c.idler and t0 <= c.time <= t0 + dt:
            k = resolve_idler_mode(c.frequency, cfg)
            if k is not None:
                modes.append(k)
    return modes


def _pair_consistent(idler_mode: int, fa: float, fb: float, cfg: ExperimentConfig) -> bool:
    w1, w2, w3 = cfg.modes[idler_mode]
    tol = cfg.tolerance
    if abs(cfg.pump_frequency_w0 - ((w1 + fa) + fb)) > tol:
        return False
    straight = abs(fa - w2) <= tol and abs(fb - w3) <= tol
    swapped = abs(fa - w3) <= tol and abs(fb - w2) <= tol
    return straight or swapped


def coincidence_decide(events: Sequence[PhotonEvent | Click], cfg: ExperimentConfig,
                       protocol: Protocol = Protocol.ENTANGLED_TWO_PHOTON) -> TrialOutcome:
    """Apply the positive-detection criterion to one trial.

    Two-photon protocols scan signal-arm pairs in time order (earliest first
    photon, then earliest second) and stop at the first pair that lies within
    the coincidence window and, for the entangled protocol, has an idler from
    the same trial whose mode and energy budget it matches. Single-photon
    protocols scan individual clicks the same way.
    """
    protocol = Protocol(protocol)
    clicks = strip(events)
    signal = sorted((c for c in clicks if not c.idler), key=lambda c: c.time)
    idler_modes = _idler_modes(clicks, cfg) if protocol.uses_idler else []
    window = energy = absent = 0

    if protocol.signal_photons == 1:
        for c in signal:
            if not protocol.uses_idler:
                return TrialOutcome(True, None, c.time, Rejections(window, energy, absent))
            if not idler_modes:
                absent += 1
                continue
            hit = next((k for k in idler_modes if abs(c.frequency - cfg.modes[k][1]) <= cfg.tolerance), None)
            if hit is None:
                energy += 1
                continue
            return TrialOutcome(True, hit + 1, c.time, Rejections(window, energy, absent))
        return TrialOutcome(False, diagnostics=Rejections(window, energy, absent))

    dt = cfg.coincidence_window_dt
    for i, a in enumerate(signal):
        for b in signal[i + 1:]:
            if abs(b.time - a.time) > dt:
                window += 1
                continue
            mid = (a.time + b.time) / 2
            if not protocol.uses_idler:
                return TrialOutcome(True, None, mid, Rejections(window, energy, absent))
            if not idler_modes:
                absent += 1
                continue
            hit = next((k for k in idler_modes if _pair_consistent(k, a.frequency, b.frequency, cfg)), None)
            if hit is None:
                energy += 1
                continue
            return TrialOutcome(True, hit + 1, mid, Rejections(window, energy, absent))
    return TrialOutcome(False, diagnostics=Rejections(window, energy, absent))
