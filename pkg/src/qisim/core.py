"""Domain types, configuration loading and validation."""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# Pump for three 1550 nm daughter photons.
DEFAULT_PUMP_W0 = 3 * 2 * math.pi * SPEED_OF_LIGHT / 1550e-9

NOISE_WARN_LEVEL = 0.1
DEFAULT_TOLERANCE_FRACTION = 1e-6
# Half-width of the idler band, as a fraction of the pump frequency.
MODE_BAND_FRACTION = 1 / 36

NOISE_TIMINGS = ("gate", "record")


class Protocol(str, enum.Enum):
    CLASSICAL_SINGLE = "ClassicalSingle"
    LLOYD_ENTANGLED = "LloydEntangled"
    CLASSICAL_TWO_PHOTON = "ClassicalTwoPhoton"
    ENTANGLED_TWO_PHOTON = "EntangledTwoPhoton"

    @property
    def signal_photons(self) -> int:
        return 2 if self in (Protocol.CLASSICAL_TWO_PHOTON, Protocol.ENTANGLED_TWO_PHOTON) else 1

    @property
    def uses_idler(self) -> bool:
        return self in (Protocol.LLOYD_ENTANGLED, Protocol.ENTANGLED_TWO_PHOTON)


PROTOCOLS = tuple(Protocol)


class Hypothesis(str, enum.Enum):
    TARGET_ABSENT = "H0"
    TARGET_PRESENT = "H1"

    @classmethod
    def parse(cls, text: str) -> Hypothesis:
        aliases = {"h0": cls.TARGET_ABSENT, "absent": cls.TARGET_ABSENT,
                   "targetabsent": cls.TARGET_ABSENT,
                   "h1": cls.TARGET_PRESENT, "present": cls.TARGET_PRESENT,
                   "targetpresent": cls.TARGET_PRESENT}
        try:
            return aliases[text.lower().replace("_", "")]
        except KeyError:
            raise ValueError(f"unknown hypothesis {text!r}") from None


def parse_protocol(text: str) -> Protocol:
    for p in Protocol:
        if text.lower() in (p.value.lower(), p.name.lower()):
            return p
    raise ValueError(f"unknown protocol {text!r}")


# --- validation errors ------------------------------------------------------

class Violation(ValueError):
    """One broken configuration invariant."""

    code = "Violation"


class InvalidNoise(Violation):
    code = "InvalidNoise"


class WindowTooNarrow(Violation):
    code = "WindowTooNarrow"


class EnergyMismatch(Violation):
    code = "EnergyMismatch"


class BadRange(Violation):
    code = "BadRange"


class ConfigError(ValueError):
    """Raised with every violated invariant, not only the first."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(f"{v.code}: {v}" for v in self.violations))

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


class HighNoiseWarning(UserWarning):
    """N_B is outside the N_B << 1 regime the probability formulas assume."""


# --- configuration ----------------------------------------------------------

ModeTriple = tuple[float, float, float]


def uniform_mode_table(M: int, w0: float) -> list[ModeTriple]:
    """Deterministic mode table with ``M`` distinct triples summing to ``w0``.

    Idler frequencies are spread linearly over a band centred on ``w0/3``.
    The two signal frequencies share the remainder, offset so that the
    photon-2 band lies entirely above the photon-3 band (for ``M > 1``).
    The third entry is computed as a remainder so each sum is exact to
    rounding.
    """
    if M < 1 or not w0 > 0:
        raise ValueError("uniform_mode_table needs M >= 1 and w0 > 0")
    centre = w0 / 3
    band = MODE_BAND_FRACTION * w0
    offset = 0.0 if M == 1 else 1.5 * band
    table = []
    for k in range(M):
        u = 0.0 if M == 1 else -1.0 + 2.0 * k / (M - 1)
        w1 = centre + band * u
        w2 = (w0 - w1) / 2 + offset
        w3 = w0 - w1 - w2
        table.append((w1, w2, w3))
    return table


@dataclass(frozen=True)
class ExperimentConfig:
    """Physical parameters for one scenario.

    ``noise_modes_MB``, ``mode_frequencies`` and ``energy_tolerance`` may be
    left as ``None``; the resolved values are on :attr:`noise_modes`,
    :attr:`modes` and :attr:`tolerance`.
    """

    num_modes_M: int = 100
    noise_modes_MB: int | None = None
    noise_mean_NB: float = 0.01
    reflectivity_eta: float = 0.1
    trials_m: int = 1
    pump_frequency_w0: float = DEFAULT_PUMP_W0
    mode_frequencies: tuple[ModeTriple, ...] | None = None
    coincidence_window_dt: float = 2e-9
    generation_jitter: float = 1e-9
    energy_tolerance: float | None = None
    emission_time_t0: float = 0.0
    true_range: float = 150.0
    rng_seed: int = 0
    max_range: float = 300.0
    noise_timing: str = "gate"
    poisson_noise: bool = False

    def __post_init__(self):
        if self.mode_frequencies is not None:
            table = tuple(tuple(float(w) for w in triple) for triple in self.mode_frequencies)
            object.__setattr__(self, "mode_frequencies", table)

    @cached_property
    def modes(self) -> tuple[ModeTriple, ...]:
        if self.mode_frequencies is not None:
            return self.mode_frequencies
        return tuple(uniform_mode_table(self.num_modes_M, self.pump_frequency_w0))

    @property
    def noise_modes(self) -> int:
        return self.num_modes_M if self.noise_modes_MB is None else self.noise_modes_MB

    @property
    def tolerance(self) -> float:
        if self.energy_tolerance is None:
            return DEFAULT_TOLERANCE_FRACTION * self.pump_frequency_w0
        return self.energy_tolerance

    @property
    def return_time(self) -> float:
        return self.emission_time_t0 + 2 * self.true_range / SPEED_OF_LIGHT

    def replace(self, **changes: Any) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "mode_frequencies" and value is not None:
                value = [list(t) for t in value]
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([BadRange(f"unknown config key(s): {', '.join(unknown)}")])
        return cls(**data)


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError([BadRange("config document must be a JSON object")])
    return ExperimentConfig.from_dict(data)


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_config(cfg: ExperimentConfig, *, allow_zero_noise: bool = False) -> ExperimentConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ConfigError.

    ``allow_zero_noise`` admits ``N_B == 0``, which the simulator supports
    but the SNR formulas do not.
    """
    errors: list[Violation] = []

    nb = cfg.noise_mean_NB
    low_ok = nb >= 0 if allow_zero_noise else nb > 0
    if not (isinstance(nb, (int, float)) and low_ok and nb < 1):
        bound = "[0, 1)" if allow_zero_noise else "(0, 1)"
        errors.append(InvalidNoise(f"noise_mean_NB={nb!r} not in {bound}"))
    elif nb > NOISE_WARN_LEVEL:
        warnings.warn(f"noise_mean_NB={nb} > {NOISE_WARN_LEVEL}: formulas assume N_B << 1",
                      HighNoiseWarning, stacklevel=2)

    if not (0.0 <= cfg.reflectivity_eta <= 1.0):
        errors.append(BadRange(f"reflectivity_eta={cfg.reflectivity_eta!r} not in [0, 1]"))
    for name in ("num_modes_M", "trials_m"):
        value = getattr(cfg, name)
        if not (_is_int(value) and value >= 1):
            errors.append(BadRange(f"{name}={value!r} must be a positive integer"))
    if cfg.noise_modes_MB is not None and not (_is_int(cfg.noise_modes_MB) and cfg.noise_modes_MB >= 1):
        errors.append(BadRange(f"noise_modes_MB={cfg.noise_modes_MB!r} must be a positive integer"))
    if not (_is_int(cfg.rng_seed) and 0 <= cfg.rng_seed < 2**64):
        errors.append(BadRange(f"rng_seed={cfg.rng_seed!r} must be an unsigned 64-bit integer"))
    if not cfg.generation_jitter >= 0:
        errors.append(BadRange(f"generation_jitter={cfg.generation_jitter!r} must be >= 0"))
    if not cfg.coincidence_window_dt > cfg.generation_jitter:
        errors.append(WindowTooNarrow(
            f"coincidence_window_dt={cfg.coincidence_window_dt!r} must exceed "
            f"generation_jitter={cfg.generation_jitter!r}"))
    if not cfg.true_range >= 0:
        errors.append(BadRange(f"true_range={cfg.true_range!r} must be >= 0"))
    if not cfg.max_range > 0:
        errors.append(BadRange(f"max_range={cfg.max_range!r} must be > 0"))
    if cfg.noise_timing not in NOISE_TIMINGS:
        errors.append(BadRange(f"noise_timing={cfg.noise_timing!r} not in {NOISE_TIMINGS}"))
    if not isinstance(cfg.poisson_noise, bool):
        errors.append(BadRange(f"poisson_noise={cfg.poisson_noise!r} must be a boolean"))

    w0 = cfg.pump_frequency_w0
    if not w0 > 0:
        errors.append(BadRange(f"pump_frequency_w0={w0!r} must be > 0"))
    elif cfg.tolerance < 0:
        errors.append(BadRange(f"energy_tolerance={cfg.tolerance!r} must be >= 0"))
    elif _is_int(cfg.num_modes_M) and cfg.num_modes_M >= 1:
        table = cfg.modes
        if len(table) != cfg.num_modes_M:
            errors.append(BadRange(
                f"mode_frequencies has {len(table)} triples, expected {cfg.num_modes_M}"))
        for k, triple in enumerate(table):
            if len(triple) != 3:
                errors.append(BadRange(f"mode {k + 1}: expected a frequency triple"))
                continue
            mismatch = abs(w0 - sum(triple))
            if mismatch > cfg.tolerance:
                errors.append(EnergyMismatch(
                    f"mode {k + 1}: |w0 - (w1 + w2 + w3)| = {mismatch:.6g} exceeds "
                    f"tolerance {cfg.tolerance:.6g}"))

    if errors:
        raise ConfigError(errors)
    return cfg


# --- result types -----------------------------------------------------------

@dataclass(frozen=True)
class HypothesisStats:
    """Positive/negative probabilities under both hypotheses for one protocol.

    For ``trials_m == 1`` the pairs are complements. After :func:`m_trial`
    each entry is the probability that all ``m`` trials agree, so the pairs
    no longer sum to one.
    """

    protocol: Protocol
    p_pos_h0: float
    p_pos_h1: float
    p_neg_h0: float
    p_neg_h1: float
    trials_m: int = 1

    @classmethod
    def from_positives(cls, protocol: Protocol, p_pos_h0: float, p_pos_h1: float) -> HypothesisStats:
        return cls(protocol, p_pos_h0, p_pos_h1, 1.0 - p_pos_h0, 1.0 - p_pos_h1, 1)


@dataclass(frozen=True)
class SnrReport:
    snr_ci: float
    snr_qi: float
    snr_ci2p: float
    snr_qi2r: float
    squaring_residual_classical: float = field(init=False)
    squaring_residual_entangled: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "squaring_residual_classical", abs(self.snr_ci2p - self.snr_ci**2))
        object.__setattr__(self, "squaring_residual_entangled", abs(self.snr_qi2r - self.snr_qi**2))

    def for_protocol(self, protocol: Protocol) -> float:
        return {
            Protocol.CLASSICAL_SINGLE: self.snr_ci,
            Protocol.LLOYD_ENTANGLED: self.snr_qi,
            Protocol.CLASSICAL_TWO_PHOTON: self.snr_ci2p,
            Protocol.ENTANGLED_TWO_PHOTON: self.snr_qi2r,
        }[protocol]


@dataclass(frozen=True)
class RangeEstimate:
    estimated_range: float
    arrival_time_T: float
    uncertainty: float
    truth_error: float
