"""Correlation-length estimation and figures of merit for chain output.

A first-order autoregressive fit per coordinate gives the correlation length
tau (the number of correlated samples equivalent to one independent sample);
a chain's tau is the largest over its coordinates. Figures of merit divide
cost counters by the effective sample size N/tau. Chains whose effective
sample size falls below four are flagged unreliable, and their confidence
intervals are withheld.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .samplers import ChainResult

ESS_RELIABILITY_FLOOR = 4.0
PI_CEILING = 1.0 - 1e-6
Z_95 = 1.959963984540054  # two-sided 95% normal quantile


class DegenerateSeriesError(ValueError):
    """Series has zero sample variance, so autocorrelation is undefined."""

    def __init__(self, message: str, coordinate: int | None = None):
        super().__init__(message)
        self.coordinate = coordinate


def ar1_tau(series: np.ndarray) -> tuple[float, float]:
    """Correlation length of a series under an AR(1) model.

    Fits X_t = E(X_t) + pi * X_{t-1} + a_t by the lag-1 sample autocorrelation
    and returns (tau, pi_hat) where tau = var(a_t) / (var(X_t) * (1-pi)^2),
    which with the AR(1) identity var(a) = var(X)*(1-pi^2) reduces to
    (1+pi)/(1-pi). pi_hat is clamped to [0, 1-1e-6] before the ratio (negative
    autocorrelation still means tau = 1 here), and tau is clamped below at 1;
    the returned pi_hat is the clamped value.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 1 or series.size < 10:
        raise ValueError(f"series must be 1-D with length >= 10, got shape {series.shape}")
    if not np.isfinite(series).all():
        raise ValueError("series must be finite")
    centered = series - series.mean()
    denom = float(centered @ centered)
    if denom <= 0.0:
        raise DegenerateSeriesError("series has zero sample variance")
    pi_hat = float(centered[1:] @ centered[:-1]) / denom
    pi_hat = min(max(pi_hat, 0.0), PI_CEILING)
    tau = max(1.0, (1.0 + pi_hat) / (1.0 - pi_hat))
    return tau, pi_hat


def chain_tau(samples: np.ndarray) -> float:
    """Largest per-coordinate correlation length of an N x p sample matrix."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError(f"samples must be N x p, got shape {samples.shape}")
    best = 0.0
    for j in range(samples.shape[1]):
        try:
            tau, _ = ar1_tau(samples[:, j])
        except DegenerateSeriesError as exc:
            raise DegenerateSeriesError(
                f"coordinate {j}: {exc}", coordinate=j
            ) from exc
        best = max(best, tau)
    return best


@dataclass
class FigureOfMerit:
    """Cost-per-independent-sample summary of one chain."""

    tau: float
    ess: float
    evals_per_indep: float
    seconds_per_indep: float
    ci_low: float   # nominal 95% bounds on evals_per_indep; NaN when unreliable
    ci_high: float
    reliable: bool


def figures_of_merit(result: ChainResult) -> FigureOfMerit:
    """Correlation length, effective sample size, and per-independent-sample costs.

    The nominal 95% interval on evaluations per independent sample propagates
    the large-sample standard error of pi_hat under normal AR(1) increments,
    se(pi) = sqrt((1-pi^2)/N), through tau = (1+pi)/(1-pi) by the delta
    method. It understates the true uncertainty and is best read as a lower
    bound on it. Chains with effective sample size below four are flagged
    unreliable and get NaN bounds.
    """
    samples = np.asarray(result.samples, dtype=float)
    n = samples.shape[0]
    if n < 10:
        raise ValueError(f"need at least 10 samples, got {n}")
    best_tau = 0.0
    best_pi = 0.0
    for j in range(samples.shape[1]):
        try:
            tau, pi_hat = ar1_tau(samples[:, j])
        except DegenerateSeriesError as exc:
            raise DegenerateSeriesError(f"coordinate {j}: {exc}", coordinate=j) from exc
        if tau > best_tau:
            best_tau, best_pi = tau, pi_hat
    ess = n / best_tau
    evals_per_indep = result.total_density_evals / ess
    seconds_per_indep = result.wall_seconds / ess
    reliable = ess >= ESS_RELIABILITY_FLOOR
    if reliable:
        se_pi = math.sqrt((1.0 - best_pi**2) / n)
        se_tau = 2.0 * se_pi / (1.0 - best_pi) ** 2
        se_epi = result.total_density_evals / n * se_tau
        ci_low = max(evals_per_indep - Z_95 * se_epi, 0.0)
        ci_high = evals_per_indep + Z_95 * se_epi
    else:
        ci_low = ci_high = float("nan")
    return FigureOfMerit(
        tau=float(best_tau),
        ess=float(ess),
        evals_per_indep=float(evals_per_indep),
        seconds_per_indep=float(seconds_per_indep),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        reliable=bool(reliable),
    )
