"""Target range from the arrival time of a detected coincidence."""

from __future__ import annotations

from .core import SPEED_OF_LIGHT, ExperimentConfig, Hypothesis, Protocol, RangeEstimate
from .engine import CHUNK_SIZE, chunk_seeds, run_chunks
from .matcher import TrialOutcome


class NotDetected(ValueError):
    pass


def range_from_arrival(arrival_time: float, cfg: ExperimentConfig) -> RangeEstimate:
    estimate = SPEED_OF_LIGHT * (arrival_time - cfg.emission_time_t0) / 2
    return RangeEstimate(
        estimated_range=estimate,
        arrival_time_T=arrival_time,
        uncertainty=SPEED_OF_LIGHT * cfg.coincidence_window_dt / 2,
        truth_error=estimate - cfg.true_range,
    )


def estimate_range(outcome: TrialOutcome, cfg: ExperimentConfig) -> RangeEstimate:
    if not outcome.detected:
        raise NotDetected("no coincidence was detected in this trial")
    return range_from_arrival(outcome.arrival_time_T, cfg)


def simulate_ranges(cfg: ExperimentConfig, n_trials: int, *, seed: int | None = None, workers: int = 1,
                    protocol: Protocol = Protocol.ENTANGLED_TWO_PHOTON,
                    chunk_size: int = CHUNK_SIZE) -> list[tuple[int, RangeEstimate]]:
    """Range estimates for every detected trial with the target present, keyed by trial index."""
    seed = cfg.rng_seed if seed is None else seed
    seeds = chunk_seeds(seed, n_trials, chunk_size)
    results = run_chunks(cfg, Hypothesis.TARGET_PRESENT, protocol, n_trials, seeds,
                         workers=workers, chunk_size=chunk_size, keep_arrivals=True)
    out = []
    for r in results:
        for idx, T in zip(r.trial_index, r.arrivals):
            out.append((int(idx), range_from_arrival(float(T), cfg)))
    return out
