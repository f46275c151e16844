"""Command-line front end: analytic | simulate | sweep | equivalence | range.

Data goes to standard output (or ``--out``); diagnostics go to standard error.

Exit codes: 0 ok, 2 bad config or arguments, 3 Monte Carlo disagreement
under ``--strict``, 4 no detections in a range run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Sequence

from . import analytic
from .core import (
    PROTOCOLS,
    SPEED_OF_LIGHT,
    BadRange,
    ConfigError,
    ExperimentConfig,
    Hypothesis,
    Protocol,
    load_config,
    parse_protocol,
    validate_config,
)
from .engine import chunk_seeds, run_monte_carlo
from .ranging import simulate_ranges



def diag(message: str) -> None:
    print(message, file=sys.stderr)

EXIT_CONFIG = 2
EXIT_DISAGREE = 3
EXIT_NO_DETECTIONS = 4

ANALYTIC_HEADER = ["protocol", "p0_pos", "p1_pos", "snr"]
SWEEP_HEADER = ["axis", "value", "protocol", "p0_pos", "p1_pos", "snr", "mc_trials", "mc_seed",
                "mc_p0_pos", "mc_p0_lo99", "mc_p0_hi99", "mc_p1_pos", "mc_p1_lo99", "mc_p1_hi99", "mc_agree"]
EQUIVALENCE_HEADER = ["M", "m_prime", "ratio_m_prime_over_m", "asymptotic_m_prime", "target_snr",
                      "in_valid_regime"]
RANGE_HEADER = ["trial", "estimated_range", "arrival_time_T", "uncertainty", "truth_error"]

AXES = {
    "eta": ("reflectivity_eta", float),
    "NB": ("noise_mean_NB", float),
    "M": ("num_modes_M", int),
    "m": ("trials_m", int),
    "window": ("coincidence_window_dt", float),
}
SWEEP_MODES = {"analytic": "AnalyticOnly", "mc": "MonteCarloOnly", "both": "Both"}


class UsageError(ValueError):
    pass


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".17g")


def snr_value(x: float, db: bool) -> float:
    return 10 * math.log10(x) if db else x


def analytic_cells(cfg: ExperimentConfig, protocol: Protocol, db: bool) -> list[str]:
    """p0_pos, p1_pos and snr at ``cfg.trials_m`` trials, formatted."""
    stats = analytic.m_trial(analytic.hypothesis_stats(cfg, protocol), cfg.trials_m)
    if stats.p_pos_h0 == 0:
        raise analytic.DivisionByZeroNoise("SNR undefined: false-positive probability is zero")
    return [fmt(stats.p_pos_h0), fmt(stats.p_pos_h1), fmt(snr_value(stats.p_pos_h1 / stats.p_pos_h0, db))]


def snr_header(header: list[str], db: bool) -> list[str]:
    return [("snr_db" if h == "snr" and db else h) for h in header]


def csv_text(header: list[str], rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# --- subcommands ------------------------------------------------------------

def cmd_analytic(cfg: ExperimentConfig, args) -> tuple[str, int]:
    validate_config(cfg)
    if args.format == "json":
        report = analytic.snr_report(cfg)
        doc = {
            "stats": [
                {k: (v.value if isinstance(v, Protocol) else v)
                 for k, v in vars(analytic.m_trial(analytic.hypothesis_stats(cfg, p), cfg.trials_m)).items()}
                for p in PROTOCOLS
            ],
            "snr": vars(report),
        }
        return json.dumps(doc, indent=2) + "\n", 0
    rows = [[p.value, *analytic_cells(cfg, p, args.db)] for p in PROTOCOLS]
    return csv_text(snr_header(ANALYTIC_HEADER, args.db), rows), 0


def cmd_simulate(cfg: ExperimentConfig, args) -> tuple[str, int]:
    validate_config(cfg, allow_zero_noise=True)
    protocol = parse_protocol(args.protocol)
    hypothesis = Hypothesis.parse(args.hypothesis)
    summary = run_monte_carlo(cfg, hypothesis, protocol, args.trials, seed=args.seed, workers=args.workers)
    agree = summary.agrees(cfg)
    doc = {
        "protocol": protocol.value,
        "hypothesis": hypothesis.value,
        "trials": summary.trials,
        "detections": summary.detections,
        "p_pos": summary.p_pos,
        "p_neg": summary.p_neg,
        "wilson_interval_95": list(summary.wilson_interval_95),
        "wilson_interval_99": list(summary.wilson_interval_99),
        "analytic_p_pos": summary.analytic_reference(cfg),
        "agreement": agree,
        "mean_range_error": summary.mean_range_error,
        "rejections": summary.rejections,
        "seed": summary.seed,
        "seed_chain": summary.seed_chain,
        "config": cfg.to_dict(),
    }
    code = EXIT_DISAGREE if args.strict and not agree else 0
    if not agree:
        diag(f"warning: analytic p={doc['analytic_p_pos']!r} outside 99% Wilson interval "
             f"{doc['wilson_interval_99']!r}")
    return json.dumps(doc, indent=2) + "\n", code


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    protocols: tuple[Protocol, ...] = PROTOCOLS
    mode: str = "AnalyticOnly"
    n_trials: int = 100_000

    def __post_init__(self):
        if self.axis not in AXES:
            raise UsageError(f"unknown sweep axis {self.axis!r}; choose from {', '.join(AXES)}")
        if self.mode not in SWEEP_MODES.values():
            raise UsageError(f"unknown sweep mode {self.mode!r}")
        if not self.values:
            raise UsageError("sweep values must be non-empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise UsageError("sweep values must be strictly increasing")
        kind = AXES[self.axis][1]
        if kind is int and any(float(v) != int(v) for v in self.values):
            raise UsageError(f"axis {self.axis} takes integer values")
        if self.mode != "AnalyticOnly" and self.n_trials < 1:
            raise UsageError("n_trials must be >= 1 for Monte Carlo sweeps")

    @property
    def with_analytic(self) -> bool:
        return self.mode != "MonteCarloOnly"

    @property
    def with_mc(self) -> bool:
        return self.mode != "AnalyticOnly"


def _parse_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse value list {text!r}") from None


def sweep_spec_from_args(args) -> SweepSpec:
    data = {}
    if args.spec:
        with open(args.spec) as fh:
            data = json.load(fh)
    axis = args.axis or data.get("axis")
    if axis is None:
        raise UsageError("sweep needs --axis (or a spec file)")
    values = _parse_list(args.values) if args.values else [float(v) for v in data.get("values", [])]
    kind = AXES[axis][1] if axis in AXES else float
    protocols = args.protocols.split(",") if args.protocols else data.get("protocols")
    mode = SWEEP_MODES.get(args.mode, args.mode) if args.mode else data.get("mode", "AnalyticOnly")
    mode = SWEEP_MODES.get(mode, mode)
    try:
        prots = tuple(parse_protocol(p) for p in protocols) if protocols else PROTOCOLS
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n_trials = args.trials if args.trials is not None else data.get("n_trials", 100_000)
    if kind is int:
        values = [int(v) if float(v) == int(v) else v for v in values]
    return SweepSpec(axis, tuple(values), prots, mode, n_trials)


def cmd_sweep(cfg: ExperimentConfig, args) -> tuple[str, int]:
    spec = sweep_spec_from_args(args)
    field_name = AXES[spec.axis][0]
    points = [cfg.replace(**{field_name: v}) for v in spec.values]
    violations = []
    for point in points:
        try:
            validate_config(point, allow_zero_noise=not spec.with_analytic)
        except ConfigError as exc:
            violations.extend(exc.violations)
    if violations:
        raise ConfigError(violations)

    seed = cfg.rng_seed if args.seed is None else args.seed
    order = {p: i for i, p in enumerate(PROTOCOLS)}
    rows = []
    for value, point in zip(spec.values, points):
        for protocol in sorted(spec.protocols, key=order.__getitem__):
            cells = analytic_cells(point, protocol, args.db) if spec.with_analytic else ["", "", ""]
            mc = [""] * 8
            if spec.with_mc:
                h0, h1 = (run_monte_carlo(point, h, protocol, spec.n_trials, seed=seed, workers=args.workers)
                          for h in Hypothesis)
                mc = [fmt(spec.n_trials), fmt(seed),
                      fmt(h0.p_pos), *map(fmt, h0.wilson_interval_99),
                      fmt(h1.p_pos), *map(fmt, h1.wilson_interval_99),
                      fmt(h0.agrees(point) and h1.agrees(point))]
            rows.append([spec.axis, fmt(value), protocol.value, *cells, *mc])
    return csv_text(snr_header(SWEEP_HEADER, args.db), rows), 0


def cmd_equivalence(cfg: ExperimentConfig, args) -> tuple[str, int]:
    validate_config(cfg)
    if cfg.reflectivity_eta == 0:
        raise ConfigError([BadRange("equivalence needs reflectivity_eta > 0")])
    m_list = [int(v) for v in _parse_list(args.m_list)] if args.m_list else [cfg.num_modes_M]
    rows = []
    for M in m_list:
        point = validate_config(cfg.replace(num_modes_M=M))
        res = analytic.solve_equivalent_bandwidth(point, regime_threshold=args.regime_threshold)
        rows.append([fmt(M), fmt(res.m_prime), fmt(res.ratio_m_prime_over_m), fmt(res.asymptotic_m_prime),
                     fmt(res.target_snr), fmt(res.in_valid_regime)])
    return csv_text(EQUIVALENCE_HEADER, rows), 0


def cmd_range(cfg: ExperimentConfig, args) -> tuple[str, int]:
    validate_config(cfg, allow_zero_noise=True)
    protocol = parse_protocol(args.protocol)
    seed = cfg.rng_seed if args.seed is None else args.seed
    estimates = simulate_ranges(cfg, args.trials, seed=seed, workers=args.workers, protocol=protocol)
    diag(f"range run: seed={seed} trials={args.trials} detections={len(estimates)} "
         f"chunk_seeds={chunk_seeds(seed, args.trials)}")
    rows = [[fmt(i), fmt(r.estimated_range), fmt(r.arrival_time_T), fmt(r.uncertainty), fmt(r.truth_error)]
            for i, r in estimates]
    uncertainty = SPEED_OF_LIGHT * cfg.coincidence_window_dt / 2
    if not estimates:
        diag(f"error: no detections in {args.trials} trials")
        return csv_text(RANGE_HEADER, rows), EXIT_NO_DETECTIONS
    mean_est = sum(r.estimated_range for _, r in estimates) / len(estimates)
    mae = sum(abs(r.truth_error) for _, r in estimates) / len(estimates)
    rows.append(["summary", fmt(mean_est), "", fmt(uncertainty), fmt(mae)])
    return csv_text(RANGE_HEADER, rows), 0


COMMANDS = {
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "equivalence": cmd_equivalence,
    "range": cmd_range,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config file")
    common.add_argument("--out", default=None, help="output file (default: standard output)")
    common.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--db", action="store_true", help="report SNR as 10*log10")

    p = argparse.ArgumentParser(prog="qisim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    a = sub.add_parser("analytic", parents=[common], help="closed-form probabilities and SNRs")
    a.add_argument("--format", choices=["csv", "json"], default="csv")

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo run for one protocol/hypothesis")
    s.add_argument("--protocol", default=Protocol.ENTANGLED_TWO_PHOTON.value)
    s.add_argument("--hypothesis", default="H1")
    s.add_argument("--trials", type=int, default=1_000_000)
    s.add_argument("--strict", action="store_true", help="exit 3 if analytic value is outside the 99%% interval")

    w = sub.add_parser("sweep", parents=[common], help="parameter sweep")
    w.add_argument("--spec", default=None, help="JSON sweep spec (axis, values, protocols, mode, n_trials)")
    w.add_argument("--axis", choices=list(AXES), default=None)
    w.add_argument("--values", default=None, help="comma-separated, strictly increasing")
    w.add_argument("--protocols", default=None, help="comma-separated protocol names")
    w.add_argument("--mode", default=None, choices=[*SWEEP_MODES, *SWEEP_MODES.values()])
    w.add_argument("--trials", type=int, default=None)

    e = sub.add_parser("equivalence", parents=[common], help="mode count M' matching SNRs")
    e.add_argument("--m-list", default=None, help="comma-separated M values")
    e.add_argument("--regime-threshold", type=float, default=analytic.DEFAULT_REGIME_THRESHOLD)

    r = sub.add_parser("range", parents=[common], help="range estimates from simulated detections")
    r.add_argument("--trials", type=int, default=10_000)
    r.add_argument("--protocol", default=Protocol.ENTANGLED_TWO_PHOTON.value)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        text, code = COMMANDS[args.cmd](cfg, args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"{getattr(v, 'code', type(v).__name__)}: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except (UsageError, OSError, TypeError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()
    return code


if __name__ == "__main__":
    sys.exit(main())
