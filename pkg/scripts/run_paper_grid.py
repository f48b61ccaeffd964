#!/usr/bin/env python3
"""Full-scale benchmark grid: 4 samplers x 4 targets x 12 tunings, 150k samples.

Writes results.csv, plot_results.py, and a rendered PNG (if matplotlib is
importable) under --out-dir. Expect this to take a few hours at full chain
length; use --chain-length to scale it down.
"""

import argparse
import subprocess
import sys
from pathlib import Path

from adaslice.harness import ExperimentSpec, emit_plot_script, run_experiment, write_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="results/full_grid")
    parser.add_argument("--chain-length", type=int, default=150_000)
    parser.add_argument("--master-seed", type=int, default=20100308)
    parser.add_argument("--replicates", type=int, default=1)
    parser.add_argument("--parallelism", type=int, default=2)
    parser.add_argument("--render", action="store_true",
                        help="run the emitted plot script after the sweep")
    args = parser.parse_args()

    spec = ExperimentSpec(
        targets=["n4-pos", "n4-neg", "eight-schools", "mixture10"],
        methods=["covariance_matching", "shrinking_rank",
                 "nonadaptive_crumb", "metropolis_trials"],
        chain_length=args.chain_length,
        master_seed=args.master_seed,
        replicate_count=args.replicates,
        parallelism=args.parallelism,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = run_experiment(spec)
    csv_path = out_dir / "results.csv"
    write_csv(rows, csv_path)
    plot_path = out_dir / "plot_results.py"
    emit_plot_script(rows, plot_path, default_out=str(out_dir / "results.png"))
    failures = sum(r.error_flag for r in rows)
    print(f"{len(rows)} cells -> {csv_path} ({failures} failed)")

    if args.render:
        subprocess.run([sys.executable, str(plot_path)], check=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
