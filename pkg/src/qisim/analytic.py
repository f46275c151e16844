"""Closed-form detection probabilities, SNRs and the bandwidth equivalence."""

from __future__ import annotations

from dataclasses import dataclass, replace

from scipy.optimize import bisect

from .core import ExperimentConfig, HypothesisStats, Protocol, SnrReport

DEFAULT_REGIME_THRESHOLD = 1e3


class DivisionByZeroNoise(ZeroDivisionError):
    """SNR requested with zero background noise."""


class NoSolution(ValueError):
    """Target SNR is not reachable by any positive mode count."""


def classical_single(cfg: ExperimentConfig) -> HypothesisStats:
    nb, eta = cfg.noise_mean_NB, cfg.reflectivity_eta
    return HypothesisStats.from_positives(Protocol.CLASSICAL_SINGLE, nb, (1 - eta) * nb + eta)


def lloyd_entangled(cfg: ExperimentConfig) -> HypothesisStats:
    eta = cfg.reflectivity_eta
    per_mode = cfg.noise_mean_NB / cfg.num_modes_M
    return HypothesisStats.from_positives(Protocol.LLOYD_ENTANGLED, per_mode, (1 - eta) * per_mode + eta)


def classical_two_photon(cfg: ExperimentConfig) -> HypothesisStats:
    # Two statistically independent arrivals, each with the single-photon law.
    one = classical_single(cfg)
    return HypothesisStats.from_positives(Protocol.CLASSICAL_TWO_PHOTON, one.p_pos_h0**2, one.p_pos_h1**2)


def entangled_two_photon(cfg: ExperimentConfig) -> HypothesisStats:
    one = lloyd_entangled(cfg)
    return HypothesisStats.from_positives(Protocol.ENTANGLED_TWO_PHOTON, one.p_pos_h0**2, one.p_pos_h1**2)


_BY_PROTOCOL = {
    Protocol.CLASSICAL_SINGLE: classical_single,
    Protocol.LLOYD_ENTANGLED: lloyd_entangled,
    Protocol.CLASSICAL_TWO_PHOTON: classical_two_photon,
    Protocol.ENTANGLED_TWO_PHOTON: entangled_two_photon,
}


def hypothesis_stats(cfg: ExperimentConfig, protocol: Protocol) -> HypothesisStats:
    return _BY_PROTOCOL[Protocol(protocol)](cfg)


def m_trial(stats: HypothesisStats, m: int) -> HypothesisStats:
    """Probabilities that all ``m`` independent trials give the same verdict.

    Positive and negative probabilities are both raised to the ``m``-th power,
    e.g. the entangled false negative becomes ``(1 - N_B/M)**m (1 - eta)**m``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    return replace(
        stats,
        p_pos_h0=stats.p_pos_h0**m,
        p_pos_h1=stats.p_pos_h1**m,
        p_neg_h0=stats.p_neg_h0**m,
        p_neg_h1=stats.p_neg_h1**m,
        trials_m=stats.trials_m * m,
    )


def _ratio(stats: HypothesisStats) -> float:
    if stats.p_pos_h0 == 0:
        raise DivisionByZeroNoise(f"{stats.protocol.value}: false-positive probability is zero")
    return stats.p_pos_h1 / stats.p_pos_h0


def snr(cfg: ExperimentConfig, protocol: Protocol) -> float:
    return _ratio(hypothesis_stats(cfg, protocol))


def snr_report(cfg: ExperimentConfig) -> SnrReport:
    if cfg.noise_mean_NB == 0:
        raise DivisionByZeroNoise("SNR is undefined for N_B = 0")
    return SnrReport(
        snr_ci=_ratio(classical_single(cfg)),
        snr_qi=_ratio(lloyd_entangled(cfg)),
        snr_ci2p=_ratio(classical_two_photon(cfg)),
        snr_qi2r=_ratio(entangled_two_photon(cfg)),
    )


def snr_qi_continuous(m_modes: float, nb: float, eta: float) -> float:
    """Lloyd SNR as a function of a real-valued mode count."""
    return (m_modes / nb) * ((1 - eta) * nb / m_modes + eta)


@dataclass(frozen=True)
class EquivalenceResult:
    target_snr: float
    m_prime: float
    ratio_m_prime_over_m: float
    asymptotic_m_prime: float
    in_valid_regime: bool


def solve_equivalent_bandwidth(cfg: ExperimentConfig, *, regime_threshold: float = DEFAULT_REGIME_THRESHOLD,
                               rtol: float = 1e-14) -> EquivalenceResult:
    """Mode count M' at which Lloyd's SNR equals the two-photon entangled SNR at M.

    Solved by bisection on the increasing map ``M' -> SNR_QI(M')``.
    """
    nb, eta, M = cfg.noise_mean_NB, cfg.reflectivity_eta, cfg.num_modes_M
    if not eta > 0:
        raise NoSolution("equivalence needs reflectivity_eta > 0")
    if not nb > 0:
        raise DivisionByZeroNoise("equivalence needs N_B > 0")
    target = snr_report(cfg).snr_qi2r
    floor = 1 - eta  # limit of SNR_QI as M' -> 0
    if target <= floor:
        raise NoSolution(f"target SNR {target} not above the floor {floor}")

    def gap(x: float) -> float:
        return snr_qi_continuous(x, nb, eta) - target

    lo = hi = float(M)
    while gap(lo) > 0:
        lo /= 2
    while gap(hi) < 0:
        hi *= 2
    if gap(lo) == 0:
        root = lo
    elif gap(hi) == 0:
        root = hi
    else:
        root = bisect(gap, lo, hi, xtol=1e-300, rtol=rtol, maxiter=2000)
    return EquivalenceResult(
        target_snr=target,
        m_prime=root,
        ratio_m_prime_over_m=root / M,
        asymptotic_m_prime=eta * M**2 / nb,
        in_valid_regime=M / nb >= regime_threshold,
    )
