"""Experiment harness: CSV logging, progress-factor analysis, and the CLI.

Subcommands:

``run``    one seeded optimization run, written to a CSV log
``suite``  every benchmark over a grid of dimensions, algorithms and seeds,
           plus a summary table of evaluations-to-target medians
``rate``   progress-factor (convergence-rate) analysis of a run CSV
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .driver import (
    RestartPolicy,
    StoppingCriteria,
    TARGET_REACHED,
    ipop_run,
    run,
)
from .hees import default_params
from .objectives import BENCHMARK_NAMES, make_benchmark
from .runlog import IterationRecord, RunLog

OUT_DIR_ENV = "QNES_OUT_DIR"

CSV_COLUMNS = ("iter", "evals", "gap", "f_mean", "sigma", "det_err", "R",
               "step_type", "eta", "segment")


def progress_factors(log: RunLog) -> np.ndarray:
    """Multiplicative per-iteration reduction of the best-so-far gap.

    Factor t is gap(t-1) / gap(t); iterations without improvement yield a
    factor of one.  Pairs touching a zero gap are skipped, so all returned
    factors are positive and finite.  Requires a known optimum.
    """
    gaps = log.gaps()
    prev, cur = gaps[:-1], gaps[1:]
    keep = (prev > 0.0) & (cur > 0.0)
    return prev[keep] / cur[keep]


def _fmt(value) -> str:
    return "" if value is None else format(value, ".17e")


def write_csv(log: RunLog, path) -> None:
    """Write one data row per iteration under the fixed column header.

    Real-valued columns use full-precision scientific notation so that parsing
    the file back reproduces the numbers bit-exactly; missing values (eta
    before the first estimate, R for plain HE-ES runs, gap without a known
    optimum) are empty fields.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in log.records:
            writer.writerow([
                r.iteration, r.evals, _fmt(r.gap), _fmt(r.f_mean), _fmt(r.sigma),
                _fmt(r.det_err), _fmt(r.rate), r.step_type, _fmt(r.eta), r.segment,
            ])


def read_csv(path) -> RunLog:
    """Parse a run CSV back into a RunLog (records only, no metadata)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header in {path}: {header}")
        for row in reader:
            records.append(IterationRecord(
                iteration=int(row[0]),
                evals=int(row[1]),
                gap=float(row[2]) if row[2] else None,
                f_mean=float(row[3]),
                sigma=float(row[4]),
                det_err=float(row[5]),
                rate=float(row[6]) if row[6] else None,
                step_type=row[7],
                eta=float(row[8]) if row[8] else None,
                segment=int(row[9]),
            ))
    return RunLog(records=records)


@dataclass
class ExperimentConfig:
    """Everything a run or suite needs; flags > config file > defaults."""

    benchmarks: list[str] = field(default_factory=lambda: list(BENCHMARK_NAMES))
    dims: list[int] = field(default_factory=lambda: [5])
    algos: list[str] = field(default_factory=lambda: ["qnes", "hees"])
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    target: float = 1e-20
    budget: int | None = None  # None: 1e5 * dim
    sigma0: float = 2.0
    init_low: float = -4.0
    init_high: float = 4.0
    pairs: int | None = None
    trunc_ratio: float = 1e3
    matrix_lr: float = 0.5
    c_sigma: float | None = None
    d_sigma: float | None = None
    gradient_mode: str = "exact"
    csa_exponent: str = "grouped"
    restarts: bool = False
    max_restarts: int = 8
    out: str | None = None

    def validate(self) -> None:
        for name in self.benchmarks:
            if name not in BENCHMARK_NAMES:
                raise ValueError(f"unknown benchmark {name!r}")
        for algo in self.algos:
            if algo not in ("hees", "qnes"):
                raise ValueError(f"unknown algorithm {algo!r}")
        if any(d < 1 for d in self.dims):
            raise ValueError("dimensions must be positive")
        if not self.target > 0:
            raise ValueError("target gap must be positive")
        if self.budget is not None and self.budget < 1:
            raise ValueError("budget must be positive")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.init_low < self.init_high:
            raise ValueError("init box is empty")
        if not self.trunc_ratio > 1:
            raise ValueError("trunc-ratio must exceed 1")
        if not 0 < self.matrix_lr <= 1:
            raise ValueError("matrix-lr must lie in (0, 1]")
        if self.c_sigma is not None and not 0 < self.c_sigma < 1:
            raise ValueError("c-sigma must lie in (0, 1)")
        if self.d_sigma is not None and not self.d_sigma > 0:
            raise ValueError("d-sigma must be positive")
        if self.gradient_mode not in ("exact", "unit"):
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")
        if self.csa_exponent not in ("grouped", "ungrouped"):
            raise ValueError(f"unknown csa exponent {self.csa_exponent!r}")
        if self.max_restarts < 0:
            raise ValueError("max-restarts must be nonnegative")


def _single_run(cfg: ExperimentConfig, benchmark: str, dim: int, algo: str, seed: int) -> RunLog:
    objective = make_benchmark(benchmark, dim)
    params = default_params(
        dim,
        mode=algo,
        pairs=cfg.pairs,
        trunc_ratio=cfg.trunc_ratio,
        matrix_lr=cfg.matrix_lr,
        c_sigma=cfg.c_sigma,
        d_sigma=cfg.d_sigma,
        gradient_mode=cfg.gradient_mode,
        csa_exponent=cfg.csa_exponent,
    )
    budget = cfg.budget if cfg.budget is not None else 100_000 * dim
    stop = StoppingCriteria(max_evals=budget, target_gap=cfg.target)
    common = dict(sigma0=cfg.sigma0, init_low=cfg.init_low, init_high=cfg.init_high)
    if cfg.restarts:
        policy = RestartPolicy(enabled=True, max_restarts=cfg.max_restarts)
        return ipop_run(algo, objective, params, stop, policy, seed, **common)
    return run(algo, objective, params, stop, seed, **common)


def _default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def _cmd_run(cfg: ExperimentConfig, benchmark: str, dim: int, algo: str, seed: int) -> int:
    log = _single_run(cfg, benchmark, dim, algo, seed)
    if cfg.out is not None:
        out = Path(cfg.out)
    else:
        out = _default_out_dir() / f"{benchmark}_d{dim}_{algo}_s{seed}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(log, out)
    last_gap = log.records[-1].gap if log.records else None
    gap_text = "unknown" if last_gap is None else format(last_gap, ".3e")
    print(f"{benchmark} d={dim} {algo} seed={seed}: {log.reason} "
          f"after {log.evals} evals, gap {gap_text} -> {out}")
    return 0


def _cmd_suite(cfg: ExperimentConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    for benchmark in cfg.benchmarks:
        for dim in cfg.dims:
            for algo in cfg.algos:
                evals_to_target = []
                for seed in cfg.seeds:
                    log = _single_run(cfg, benchmark, dim, algo, seed)
                    write_csv(log, out_dir / f"{benchmark}_d{dim}_{algo}_s{seed}.csv")
                    if log.reason == TARGET_REACHED:
                        evals_to_target.append(log.evals)
                reached = len(evals_to_target)
                median_evals = statistics.median(evals_to_target) if evals_to_target else None
                summary_rows.append((benchmark, dim, algo, reached, len(cfg.seeds), median_evals))
                med_text = "-" if median_evals is None else format(median_evals, ".1f")
                print(f"{benchmark:>24} d={dim:<3} {algo:<4} reached {reached}/{len(cfg.seeds)} "
                      f"median evals {med_text}")
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("benchmark", "dim", "algo", "reached", "seeds", "median_evals"))
        for row in summary_rows:
            writer.writerow(["" if v is None else v for v in row])
    print(f"summary -> {out_dir / 'summary.csv'}")
    return 0


def _cmd_rate(path: Path, mid_start: int, mid_end: int, late_window: int) -> int:
    log = read_csv(path)
    factors = progress_factors(log)
    if factors.size == 0:
        print("no progress factors (run too short or gap never positive)")
        return 1
    # factor j belongs to the transition into records[j + 1]
    iterations = [r.iteration for r in log.records[1:]][: factors.size]
    for it, factor in zip(iterations, factors):
        print(f"{it} {factor:.6e}")
    mid = [f for it, f in zip(iterations, factors) if mid_start <= it <= mid_end]
    late = factors[-late_window:]
    print(f"max_factor {factors.max():.6e}")
    if mid:
        print(f"mid_window_median {statistics.median(mid):.6e}")
    print(f"late_window_median {statistics.median(late):.6e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qnes",
        description="Evolution-strategy experiment runner and convergence-rate analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="JSON file with defaults for any flag")
        p.add_argument("--target", type=float, help="target optimality gap (default 1e-20)")
        p.add_argument("--budget", type=int, help="evaluation budget (default 1e5 * dim)")
        p.add_argument("--sigma0", type=float, help="initial step size (default 2)")
        p.add_argument("--init-low", type=float, help="initial-mean box lower bound (default -4)")
        p.add_argument("--init-high", type=float, help="initial-mean box upper bound (default 4)")
        p.add_argument("--pairs", type=int, help="mirrored pairs per iteration (default: mode heuristic)")
        p.add_argument("--trunc-ratio", type=float, help="curvature truncation ratio (default 1e3)")
        p.add_argument("--matrix-lr", type=float, help="transform learning rate (default 0.5)")
        p.add_argument("--c-sigma", type=float, help="CSA smoothing constant (default: heuristic)")
        p.add_argument("--d-sigma", type=float, help="CSA damping (default: heuristic)")
        p.add_argument("--gradient-mode", choices=("exact", "unit"),
                       help="finite-difference normalization (default exact)")
        p.add_argument("--csa-exponent", choices=("grouped", "ungrouped"),
                       help="CSA exponent grouping (default grouped)")
        p.add_argument("--restarts", action="store_true", default=None,
                       help="wrap the run in IPOP restarts")
        p.add_argument("--no-restarts", dest="restarts", action="store_false",
                       help="disable IPOP restarts")
        p.add_argument("--max-restarts", type=int, help="restart cap (default 8)")

    p_run = sub.add_parser("run", help="single seeded run, logged to CSV")
    p_run.add_argument("--benchmark", required=True, help="benchmark name")
    p_run.add_argument("--dim", type=int, required=True, help="problem dimension")
    p_run.add_argument("--algo", choices=("hees", "qnes"), default="qnes")
    p_run.add_argument("--seed", type=int, default=1)
    p_run.add_argument("--out", type=Path, help=f"output CSV (default: ${OUT_DIR_ENV} or cwd)")
    add_common(p_run)

    p_suite = sub.add_parser("suite", help="benchmark grid, one CSV per cell plus a summary")
    p_suite.add_argument("--benchmarks", nargs="+", default=list(BENCHMARK_NAMES),
                         help="benchmark subset (default: all)")
    p_suite.add_argument("--dims", nargs="+", type=int, default=[5])
    p_suite.add_argument("--algos", nargs="+", choices=("hees", "qnes"),
                         default=["qnes", "hees"])
    p_suite.add_argument("--seeds", nargs="+", type=int, default=[1, 2, 3, 4, 5])
    p_suite.add_argument("--out-dir", type=Path, help=f"output directory (default: ${OUT_DIR_ENV} or cwd)")
    add_common(p_suite)

    p_rate = sub.add_parser("rate", help="progress-factor analysis of a run CSV")
    p_rate.add_argument("csv", type=Path, help="run CSV produced by the run subcommand")
    p_rate.add_argument("--mid-start", type=int, default=50,
                        help="first iteration of the reference window (default 50)")
    p_rate.add_argument("--mid-end", type=int, default=100,
                        help="last iteration of the reference window (default 100)")
    p_rate.add_argument("--late-window", type=int, default=20,
                        help="number of final iterations to summarize (default 20)")
    return parser


_CONFIGURABLE = {f.name for f in fields(ExperimentConfig)}


def _merge_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    config_path = getattr(args, "config", None)
    if config_path is not None:
        with open(config_path) as fh:
            file_cfg = json.load(fh)
        for key, value in file_cfg.items():
            if key not in _CONFIGURABLE:
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for key in _CONFIGURABLE:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def cli_main(argv=None) -> int:
    """Entry point; returns a process exit code instead of raising."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors by exiting
        return int(exc.code or 0)
    try:
        if args.command == "run":
            cfg = _merge_config(args)
            if args.out is not None:
                cfg.out = str(args.out)
            return _cmd_run(cfg, args.benchmark, args.dim, args.algo, args.seed)
        if args.command == "suite":
            cfg = _merge_config(args)
            cfg.benchmarks = list(args.benchmarks)
            cfg.dims = list(args.dims)
            cfg.algos = list(args.algos)
            cfg.seeds = list(args.seeds)
            cfg.validate()
            out_dir = args.out_dir if args.out_dir is not None else _default_out_dir()
            return _cmd_suite(cfg, out_dir)
        if args.command == "rate":
            return _cmd_rate(args.csv, args.mid_start, args.mid_end, args.late_window)
        parser.print_usage(sys.stderr)
        return 2
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))
