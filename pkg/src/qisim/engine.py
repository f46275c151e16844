"""Vectorised trial decisions and the seeded, parallel Monte Carlo driver."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import analytic
from .core import SPEED_OF_LIGHT, ExperimentConfig, Hypothesis, HypothesisStats, Protocol
from .events import EventTable, generate_table

CHUNK_SIZE = 1 << 16


@dataclass
class BatchDecision:
    detected: np.ndarray  # (n,) bool
    arrival_time: np.ndarray  # (n,) NaN where not detected
    matched_mode: np.ndarray  # (n,) 1-based, 0 where none
    window_rejects: np.ndarray  # (n,) int
    energy_rejects: np.ndarray
    idler_rejects: np.ndarray


def resolve_idler_modes(freq: np.ndarray, cfg: ExperimentConfig) -> np.ndarray:
    """Vectorised nearest-idler-mode lookup; -1 where nothing is within tolerance."""
    w1 = np.array([t[0] for t in cfg.modes])
    order = np.argsort(w1, kind="stable")
    sw = w1[order]
    pos = np.searchsorted(sw, freq)
    left = np.clip(pos - 1, 0, len(sw) - 1)
    right = np.clip(pos, 0, len(sw) - 1)
    gap_l = np.abs(sw[left] - freq)
    gap_r = np.abs(sw[right] - freq)
    take_r = (gap_r < gap_l) | ((gap_r == gap_l) & (order[right] < order[left]))
    idx = np.where(take_r, order[right], order[left])
    gap = np.where(take_r, gap_r, gap_l)
    return np.where(gap <= cfg.tolerance, idx, -1)


def decide_table(table: EventTable, cfg: ExperimentConfig, protocol: Protocol) -> BatchDecision:
    """Same criterion as :func:`qisim.matcher.coincidence_decide`, over a block.

    Reads only times and frequencies; ``table.click_origin`` is never touched.
    """
    protocol = Protocol(protocol)
    n = table.n
    tol = cfg.tolerance
    modes = np.array(cfg.modes, dtype=float).reshape(-1, 3)

    raw_t = table.click_time
    order = np.argsort(np.where(np.isnan(raw_t), np.inf, raw_t), axis=1, kind="stable")
    t = np.take_along_axis(raw_t, order, axis=1)
    f = np.take_along_axis(table.click_freq, order, axis=1)
    present = ~np.isnan(t)

    if protocol.uses_idler:
        t0, dt = cfg.emission_time_t0, cfg.coincidence_window_dt
        idler_mode = resolve_idler_modes(table.idler_freq, cfg)
        in_trial = (table.idler_time >= t0) & (table.idler_time <= t0 + dt)
        idler_ok = in_trial & (idler_mode >= 0)
        k = np.where(idler_ok, idler_mode, 0)
        w1, w2, w3 = modes[k, 0], modes[k, 1], modes[k, 2]
    else:
        idler_ok = np.zeros(n, dtype=bool)
        k = np.zeros(n, dtype=np.int64)

    if protocol.signal_photons == 1:
        valid = present
        window_ok = np.ones_like(valid)
        if protocol.uses_idler:
            energy_ok = np.abs(f - w2[:, None]) <= tol
        times = t
    else:
        C = t.shape[1]
        ia, ib = np.triu_indices(C, k=1)  # row-major: lexicographic pair order
        ta, tb, fa, fb = t[:, ia], t[:, ib], f[:, ia], f[:, ib]
        valid = present[:, ia] & present[:, ib]
        window_ok = np.abs(tb - ta) <= cfg.coincidence_window_dt
        if protocol.uses_idler:
            sum_ok = np.abs(cfg.pump_frequency_w0 - ((w1[:, None] + fa) + fb)) <= tol
            straight = (np.abs(fa - w2[:, None]) <= tol) & (np.abs(fb - w3[:, None]) <= tol)
            swapped = (np.abs(fa - w3[:, None]) <= tol) & (np.abs(fb - w2[:, None]) <= tol)
            energy_ok = sum_ok & (straight | swapped)
        times = (ta + tb) / 2

    if protocol.uses_idler:
        idl = idler_ok[:, None]
        qualifies = valid & window_ok & idl & energy_ok
        idler_fail = valid & window_ok & ~idl
        energy_fail = valid & window_ok & idl & ~energy_ok
    else:
        qualifies = valid & window_ok
        idler_fail = energy_fail = np.zeros_like(valid)
    window_fail = valid & ~window_ok

    detected = qualifies.any(axis=1)
    first = np.argmax(qualifies, axis=1)
    cut = np.where(detected, first, qualifies.shape[1])
    before = np.arange(qualifies.shape[1])[None, :] < cut[:, None]
    rows = np.arange(n)
    arrival = np.where(detected, times[rows, first], np.nan)
    matched = np.where(detected & protocol.uses_idler, k + 1, 0)
    return BatchDecision(
        detected=detected,
        arrival_time=arrival,
        matched_mode=matched,
        window_rejects=(window_fail & before).sum(axis=1),
        energy_rejects=(energy_fail & before).sum(axis=1),
        idler_rejects=(idler_fail & before).sum(axis=1),
    )


def wilson_interval(count: int, nobs: int, confidence: float = 0.95) -> tuple[float, float]:
    lo, hi = proportion_confint(count, nobs, alpha=1 - confidence, method="wilson")
    p = count / nobs
    # guard rounding at the 0 and n edges so the interval always contains p
    return float(min(max(lo, 0.0), p)), float(max(min(hi, 1.0), p))


def chunk_seeds(seed: int, n_trials: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    """Per-chunk seeds derived from the master seed; independent of worker count."""
    n_chunks = -(-n_trials // chunk_size)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


@dataclass
class ChunkResult:
    detections: int
    abs_range_error_sum: float
    window_rejects: int
    energy_rejects: int
    idler_rejects: int
    arrivals: np.ndarray | None = None  # arrival times of detected trials
    trial_index: np.ndarray | None = None


def _run_chunk(cfg, hypothesis, protocol, start, size, seed, keep_arrivals) -> ChunkResult:
    rng = np.random.default_rng(seed)
    table = generate_table(cfg, hypothesis, protocol, size, rng)
    d = decide_table(table, cfg, protocol)
    arrivals = d.arrival_time[d.detected]
    est = SPEED_OF_LIGHT * (arrivals - cfg.emission_time_t0) / 2
    return ChunkResult(
        detections=int(d.detected.sum()),
        abs_range_error_sum=float(np.abs(est - cfg.true_range).sum()),
        window_rejects=int(d.window_rejects.sum()),
        energy_rejects=int(d.energy_rejects.sum()),
        idler_rejects=int(d.idler_rejects.sum()),
        arrivals=arrivals if keep_arrivals else None,
        trial_index=start + np.flatnonzero(d.detected) if keep_arrivals else None,
    )


def run_chunks(cfg: ExperimentConfig, hypothesis: Hypothesis, protocol: Protocol, n_trials: int,
               seeds: Sequence[int], *, workers: int = 1, chunk_size: int = CHUNK_SIZE,
               keep_arrivals: bool = False) -> list[ChunkResult]:
    """Run every chunk; results come back in chunk order whatever the scheduling."""
    jobs = []
    for i, seed in enumerate(seeds):
        start = i * chunk_size
        jobs.append((cfg, hypothesis, protocol, start, min(chunk_size, n_trials - start), seed, keep_arrivals))
    if workers <= 1 or len(jobs) == 1:
        return [_run_chunk(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: _run_chunk(*job), jobs))


@dataclass(frozen=True)
class SimulationSummary:
    protocol: Protocol
    hypothesis: Hypothesis
    trials: int
    detections: int
    p_pos: float
    p_neg: float
    wilson_interval_95: tuple[float, float]
    wilson_interval_99: tuple[float, float]
    mean_range_error: float | None  # mean |estimate - true_range| over detections
    rejections: dict[str, int]
    seed: int
    seed_chain: list[int] = field(repr=False)

    def analytic_reference(self, cfg: ExperimentConfig) -> float:
        stats = analytic.hypothesis_stats(cfg, self.protocol)
        return stats.p_pos_h1 if self.hypothesis is Hypothesis.TARGET_PRESENT else stats.p_pos_h0

    def agrees(self, cfg: ExperimentConfig) -> bool:
        """Analytic probability inside the empirical 99% Wilson interval."""
        lo, hi = self.wilson_interval_99
        return lo <= self.analytic_reference(cfg) <= hi


def run_monte_carlo(cfg: ExperimentConfig, hypothesis: Hypothesis, protocol: Protocol, n_trials: int, *,
                    seed: int | None = None, workers: int = 1,
                    chunk_size: int = CHUNK_SIZE) -> SimulationSummary:
    """Empirical positive-detection probability over ``n_trials`` independent trials.

    Trials are cut into fixed-size chunks, each with its own seed derived
    from ``seed`` (default: the config's master seed). Chunk counts are
    added in chunk order, so the summary is identical for any ``workers``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    hypothesis, protocol = Hypothesis(hypothesis), Protocol(protocol)
    seed = cfg.rng_seed if seed is None else seed
    seeds = chunk_seeds(seed, n_trials, chunk_size)
    results = run_chunks(cfg, hypothesis, protocol, n_trials, seeds, workers=workers, chunk_size=chunk_size)

    detections = sum(r.detections for r in results)
    err_sum = 0.0
    for r in results:
        err_sum += r.abs_range_error_sum
    rejections = {
        "window": sum(r.window_rejects for r in results),
        "energy": sum(r.energy_rejects for r in results),
        "idler_absence": sum(r.idler_rejects for r in results),
    }
    p = detections / n_trials
    return SimulationSummary(
        protocol=protocol,
        hypothesis=hypothesis,
        trials=n_trials,
        detections=detections,
        p_pos=p,
        p_neg=1.0 - p,
        wilson_interval_95=wilson_interval(detections, n_trials, 0.95),
        wilson_interval_99=wilson_interval(detections, n_trials, 0.99),
        mean_range_error=err_sum / detections if detections else None,
        rejections=rejections,
        seed=seed,
        seed_chain=seeds,
    )


def empirical_stats(h0: SimulationSummary, h1: SimulationSummary) -> HypothesisStats:
    """Combine a target-absent and a target-present run into HypothesisStats."""
    if h0.protocol is not h1.protocol:
        raise ValueError("summaries are for different protocols")
    return HypothesisStats(h0.protocol, h0.p_pos, h1.p_pos, h0.p_neg, h1.p_neg, 1)
