"""Experiment-grid orchestration: samplers x targets x tunings to CSV and plots.

Every grid cell is one independent chain with a seed derived from the master
seed and the cell's position, so sweeps are reproducible cell by cell and can
run on a process pool without changing the output. Failed cells (Metropolis
tuning failure, crumb-cap aborts, degenerate chains) become rows with the
error flag set instead of aborting the sweep.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import DegenerateSeriesError, figures_of_merit
from .samplers import METHOD_NAMES, SamplerConfig, run_chain
from .targets import TARGET_NAMES, make_target

CSV_FIELDS = (
    "target", "method", "tuning", "seed", "n", "tau", "ess", "evals_per_indep",
    "seconds_per_indep", "ci_low", "ci_high", "reliable", "error_flag",
)
CSV_HEADER = ",".join(CSV_FIELDS)


def default_tunings(count: int = 12) -> list[float]:
    """Log-uniform tuning grid on [10^-1.5, 10^3.5]."""
    return [float(v) for v in np.logspace(-1.5, 3.5, count)]


@dataclass
class ExperimentSpec:
    """A sweep: every (target, method, tuning, replicate) cell runs one chain."""

    targets: list[str]
    methods: list[str]
    tunings: list[float] = field(default_factory=default_tunings)
    chain_length: int = 150_000
    master_seed: int = 0
    replicate_count: int = 1
    parallelism: int = 1
    measure_time: bool = True  # False zeroes wall times so output is byte-stable
    theta: float = 1.0
    shrink_factor: float = 0.9
    approximate_u: bool = False

    def __post_init__(self):
        if not self.targets or not self.methods or not self.tunings:
            raise ValueError("targets, methods, and tunings must be nonempty")
        for name in self.targets:
            if name not in TARGET_NAMES:
                raise ValueError(f"unknown target {name!r}; expected one of {TARGET_NAMES}")
        for name in self.methods:
            if name not in METHOD_NAMES:
                raise ValueError(f"unknown method {name!r}; expected one of {METHOD_NAMES}")
        if self.chain_length < 10:
            raise ValueError(f"chain_length must be >= 10, got {self.chain_length}")
        if any(t <= 0 for t in self.tunings):
            raise ValueError("tunings must all be positive")
        if self.replicate_count < 1 or self.parallelism < 1:
            raise ValueError("replicate_count and parallelism must be >= 1")


@dataclass
class ResultRow:
    """One CSV row: one chain's figures of merit (or an error marker)."""

    target: str
    method: str
    tuning: float
    seed: int
    n: int
    tau: float | None
    ess: float | None
    evals_per_indep: float | None
    seconds_per_indep: float | None
    ci_low: float | None
    ci_high: float | None
    reliable: bool
    error_flag: bool


def _cell_seed(master_seed: int, index: int) -> int:
    """Deterministic per-cell seed from the master seed and cell position."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def _enumerate_cells(spec: ExperimentSpec) -> list[tuple]:
    cells = []
    index = 0
    for target in spec.targets:
        for method in spec.methods:
            for tuning in spec.tunings:
                for _ in range(spec.replicate_count):
                    cells.append((index, target, method, float(tuning),
                                  _cell_seed(spec.master_seed, index)))
                    index += 1
    return cells


def _run_cell(args: tuple) -> tuple[int, ResultRow]:
    """Run one grid cell; must stay picklable for the process pool."""
    (index, target_name, method, tuning, seed, chain_length,
     theta, shrink_factor, approximate_u, measure_time) = args
    target = make_target(target_name)
    config = SamplerConfig(
        method=method,
        sigma_c=tuning,
        theta=theta,
        shrink_factor=shrink_factor,
        approximate_u=approximate_u,
    )
    row = ResultRow(
        target=target_name, method=method, tuning=tuning, seed=seed,
        n=chain_length, tau=None, ess=None, evals_per_indep=None,
        seconds_per_indep=None, ci_low=None, ci_high=None,
        reliable=False, error_flag=True,
    )
    result = run_chain(config, target, chain_length, seed)
    if result.error is not None or result.samples.shape[0] < 10:
        return index, row
    if not measure_time:
        result = replace(result, wall_seconds=0.0)
    try:
        fom = figures_of_merit(result)
    except DegenerateSeriesError:
        return index, row
    row.tau = fom.tau
    row.ess = fom.ess
    row.evals_per_indep = fom.evals_per_indep
    row.seconds_per_indep = fom.seconds_per_indep
    row.ci_low = None if math.isnan(fom.ci_low) else fom.ci_low
    row.ci_high = None if math.isnan(fom.ci_high) else fom.ci_high
    row.reliable = fom.reliable
    row.error_flag = False
    return index, row


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """Run every cell of the grid; rows come back in grid order regardless of scheduling."""
    cells = _enumerate_cells(spec)
    jobs = [
        cell + (spec.chain_length, spec.theta, spec.shrink_factor,
                spec.approximate_u, spec.measure_time)
        for cell in cells
    ]
    if spec.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.parallelism) as pool:
            indexed = list(pool.map(_run_cell, jobs, chunksize=1))
    else:
        indexed = [_run_cell(job) for job in jobs]
    indexed.sort(key=lambda pair: pair[0])
    return [row for _, row in indexed]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.6g}"
    return str(value)


def write_csv(rows: list[ResultRow], path) -> None:
    """Write rows under the fixed header; floats get 6 significant digits."""
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(_fmt(getattr(row, name)) for name in CSV_FIELDS))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_field(name: str, text: str):
    if name in ("target", "method"):
        return text
    if name in ("seed", "n"):
        return int(text)
    if name in ("reliable", "error_flag"):
        return text == "true"
    if text == "":
        return None
    return float(text)


def read_csv(path) -> list[ResultRow]:
    """Parse a results CSV written by write_csv back into rows."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header in {path}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(CSV_FIELDS):
            raise ValueError(f"malformed CSV line: {line!r}")
        kwargs = {name: _parse_field(name, text) for name, text in zip(CSV_FIELDS, parts)}
        kwargs["tuning"] = float(kwargs["tuning"])
        rows.append(ResultRow(**kwargs))
    return rows


_PLOT_TEMPLATE = '''\
#!/usr/bin/env python3
"""Benchmark panes: sampler columns x target rows, log-log axes.

Each point is one chain: evaluations per independent sample against the
tuning parameter, with a nominal 95% interval. Chains with an effective
sample size below four are drawn as question marks. Self-contained; run
with an optional output path (default {default_out!r}).
"""
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

ROWS = {rows!r}

targets = {targets!r}
methods = {methods!r}

fig, axes = plt.subplots(
    len(targets), len(methods),
    figsize=(3.2 * len(methods), 2.6 * len(targets)),
    squeeze=False, sharex=True, sharey="row",
)
for i, target in enumerate(targets):
    for j, method in enumerate(methods):
        ax = axes[i][j]
        cells = [r for r in ROWS
                 if r["target"] == target and r["method"] == method
                 and not r["error_flag"] and r["evals_per_indep"] is not None]
        good = [r for r in cells if r["reliable"]]
        if good:
            x = [r["tuning"] for r in good]
            y = [r["evals_per_indep"] for r in good]
            lo = [max(y_ - (r["ci_low"] if r["ci_low"] is not None else y_), 0.0)
                  for y_, r in zip(y, good)]
            hi = [(r["ci_high"] if r["ci_high"] is not None else y_) - y_
                  for y_, r in zip(y, good)]
            ax.errorbar(x, y, yerr=[lo, hi], fmt="o", ms=4, lw=1, capsize=2)
        for r in cells:
            if not r["reliable"]:
                ax.text(r["tuning"], r["evals_per_indep"], "?",
                        ha="center", va="center", fontsize=11)
        ax.set_xscale("log")
        ax.set_yscale("log")
        if i == 0:
            ax.set_title(method, fontsize=9)
        if j == 0:
            ax.set_ylabel(f"{{target}}\\nevals / indep sample", fontsize=8)
        if i == len(targets) - 1:
            ax.set_xlabel("tuning parameter", fontsize=8)

fig.tight_layout()
out = sys.argv[1] if len(sys.argv) > 1 else {default_out!r}
fig.savefig(out, dpi=150)
print(f"wrote {{out}}")
'''


def emit_plot_script(rows: list[ResultRow], path, default_out: str = "results.png") -> None:
    """Write a self-contained plotting script for the given rows.

    The script embeds the data and needs only matplotlib at its own runtime;
    the library itself never imports a plotting package.
    """
    if not rows:
        raise ValueError("cannot emit a plot script for zero rows")
    targets = list(dict.fromkeys(row.target for row in rows))
    methods = list(dict.fromkeys(row.method for row in rows))
    row_dicts = [
        {name: getattr(row, name) for name in CSV_FIELDS}
        for row in rows
    ]
    script = _PLOT_TEMPLATE.format(
        rows=row_dicts, targets=targets, methods=methods, default_out=default_out,
    )
    with open(path, "w") as fh:
        fh.write(script)


def parse_spec_file(path) -> ExperimentSpec:
    """Read a flat key = value sweep description.

    Keys match ExperimentSpec fields; lists are comma-separated; blank lines
    and #-comments are ignored.
    """
    values: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key in ("targets", "methods"):
                values[key] = [item.strip() for item in text.split(",") if item.strip()]
            elif key == "tunings":
                values[key] = [float(item) for item in text.split(",") if item.strip()]
            elif key in ("chain_length", "master_seed", "replicate_count", "parallelism"):
                values[key] = int(text)
            elif key in ("theta", "shrink_factor"):
                values[key] = float(text)
            elif key in ("approximate_u", "measure_time"):
                values[key] = text.lower() in ("true", "1", "yes")
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    if "targets" not in values or "methods" not in values:
        raise ValueError(f"{path}: must set at least 'targets' and 'methods'")
    return ExperimentSpec(**values)
