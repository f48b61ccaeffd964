"""Command-line interface: single chains, sweep grids, and report plotting.

Exit codes: 0 on success, 1 for configuration errors, 2 when some cells
(or the single requested chain) failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .harness import (
    ExperimentSpec,
    emit_plot_script,
    parse_spec_file,
    read_csv,
    run_experiment,
    write_csv,
    _run_cell,
)
from .samplers import METHOD_NAMES
from .targets import TARGET_NAMES

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaslice",
        description="Covariance-adaptive slice samplers and their benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one chain and write a one-row results CSV")
    run_p.add_argument("--target", required=True, metavar="NAME",
                       help=f"one of {', '.join(TARGET_NAMES)}")
    run_p.add_argument("--method", required=True, metavar="NAME",
                       help=f"one of {', '.join(METHOD_NAMES)}")
    run_p.add_argument("--sigma-c", required=True, type=float,
                       help="tuning parameter (initial crumb / first-trial stddev)")
    run_p.add_argument("--theta", type=float, default=1.0)
    run_p.add_argument("--shrink", type=float, default=0.9)
    run_p.add_argument("--approx-u", action="store_true",
                       help="covariance matching: replace the parabola fit's second "
                            "density evaluation with the slice level")
    run_p.add_argument("--n", type=int, default=150_000)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--x0", type=str, default=None,
                       help="comma-separated start point (default: origin)")
    run_p.add_argument("--out", required=True, help="path for the one-row results CSV")

    sweep_p = sub.add_parser("sweep", help="run a grid described by a spec file")
    sweep_p.add_argument("--spec", required=True, help="flat key = value sweep description")
    sweep_p.add_argument("--out-dir", required=True)

    report_p = sub.add_parser("report", help="emit a plot script from a results CSV")
    report_p.add_argument("--in", dest="in_csv", required=True)
    report_p.add_argument("--plot", required=True, help="path for the generated plot script")
    return parser


def _cmd_run(args) -> int:
    from .samplers import SamplerConfig, run_chain
    from .targets import make_target
    from .diagnostics import DegenerateSeriesError, figures_of_merit
    from .harness import ResultRow
    import math

    target = make_target(args.target)
    config = SamplerConfig(
        method=args.method,
        sigma_c=args.sigma_c,
        theta=args.theta,
        shrink_factor=args.shrink,
        approximate_u=args.approx_u,
    )
    x0 = None
    if args.x0 is not None:
        x0 = np.array([float(v) for v in args.x0.split(",")])
        if x0.shape != (target.dim,):
            raise ValueError(f"--x0 must have {target.dim} components, got {x0.shape[0]}")

    result = run_chain(config, target, args.n, args.seed, x0=x0)
    row = ResultRow(
        target=args.target, method=args.method, tuning=args.sigma_c,
        seed=args.seed, n=args.n, tau=None, ess=None, evals_per_indep=None,
        seconds_per_indep=None, ci_low=None, ci_high=None,
        reliable=False, error_flag=True,
    )
    if result.error is None and result.samples.shape[0] >= 10:
        try:
            fom = figures_of_merit(result)
        except DegenerateSeriesError:
            fom = None
        if fom is not None:
            row.tau = fom.tau
            row.ess = fom.ess
            row.evals_per_indep = fom.evals_per_indep
            row.seconds_per_indep = fom.seconds_per_indep
            row.ci_low = None if math.isnan(fom.ci_low) else fom.ci_low
            row.ci_high = None if math.isnan(fom.ci_high) else fom.ci_high
            row.reliable = fom.reliable
            row.error_flag = False
    write_csv([row], args.out)
    if row.error_flag:
        print(f"chain failed ({result.error or 'degenerate output'}); row flagged", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = parse_spec_file(args.spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_experiment(spec)
    csv_path = out_dir / "results.csv"
    write_csv(rows, csv_path)
    plot_path = out_dir / "plot_results.py"
    emit_plot_script(rows, plot_path, default_out=str(out_dir / "results.png"))
    failures = sum(row.error_flag for row in rows)
    print(f"wrote {csv_path} ({len(rows)} rows, {failures} failed) and {plot_path}")
    return EXIT_PARTIAL if failures else EXIT_OK


def _cmd_report(args) -> int:
    rows = read_csv(args.in_csv)
    emit_plot_script(rows, args.plot)
    print(f"wrote {args.plot}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_report(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
