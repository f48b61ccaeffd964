"""Benchmark target distributions behind one log-density-with-gradient interface.

Every target evaluates its (unnormalized) log density and the gradient in a
single call and counts that call once, matching the cost model in which the
gradient comes almost for free alongside the density. Four named targets back
the benchmark harness: two equicorrelated Gaussians, a hierarchical
eight-groups posterior, and a ten-component Gaussian mixture.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import InvalidInputError

# Treatment-effect estimates and standard errors for the eight schools data
# (Gelman et al., Bayesian Data Analysis).
SCHOOL_EFFECTS = np.array([28.0, 8.0, -3.0, 7.0, -1.0, 1.0, 18.0, 12.0])
SCHOOL_SIGMAS = np.array([15.0, 10.0, 16.0, 11.0, 9.0, 11.0, 10.0, 18.0])

DEFAULT_MIXTURE_SEED = 20100308

TARGET_NAMES = ("n4-pos", "n4-neg", "eight-schools", "mixture10")


@dataclass
class Target:
    """A p-dimensional target: joint log-density-and-gradient with a call counter.

    The counter makes instances stateful; give each chain its own instance.
    """

    name: str
    dim: int
    evaluator: Callable[[np.ndarray], tuple[float, np.ndarray]]
    reference_moments: tuple[np.ndarray, np.ndarray] | None = None
    eval_count: int = field(default=0)

    def evaluate(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Return (log density, gradient) at x and count one evaluation."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidInputError(f"x must have shape ({self.dim},), got {x.shape}")
        if not np.isfinite(x).all():
            raise InvalidInputError("x must be finite")
        logf, grad = self.evaluator(x)
        self.eval_count += 1
        return logf, grad

    def fresh(self) -> "Target":
        """A new instance sharing the evaluator, with its own zeroed counter."""
        return Target(self.name, self.dim, self.evaluator, self.reference_moments)


def make_equicorrelated_gaussian(p: int, rho: float, name: str | None = None) -> Target:
    """Zero-mean Gaussian with unit marginal variances and constant correlation rho.

    The precision matrix has the closed form a*I + b*11^T, so construction never
    inverts the (possibly badly conditioned) correlation matrix numerically.
    """
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if not (-1.0 / (p - 1) < rho < 1.0):
        raise ValueError(f"rho={rho} outside the positive-definite range "
                         f"(-1/(p-1), 1) = ({-1.0 / (p - 1)}, 1)")
    a = 1.0 / (1.0 - rho)
    b = -rho / ((1.0 - rho) * (1.0 + (p - 1) * rho))

    def evaluator(x: np.ndarray) -> tuple[float, np.ndarray]:
        s = x.sum()
        grad = -(a * x + (b * s) * np.ones(p))
        logf = 0.5 * (x @ grad)
        return logf, grad

    cov = np.full((p, p), rho)
    np.fill_diagonal(cov, 1.0)
    if name is None:
        name = f"equicorrelated(p={p}, rho={rho})"
    return Target(name, p, evaluator, reference_moments=(np.zeros(p), cov))


def make_eight_schools() -> Target:
    """Hierarchical normal-means posterior in ten dimensions.

    Coordinates are (theta_1..theta_8, mu, lam) with lam = log(group scale tau),
    flat priors on mu and tau > 0, and the +lam Jacobian from sampling on the
    log scale. Everything is unconstrained so gradients exist everywhere.
    """
    y = SCHOOL_EFFECTS
    sig_sq = SCHOOL_SIGMAS**2
    n = len(y)
    p = n + 2

    def evaluator(x: np.ndarray) -> tuple[float, np.ndarray]:
        theta = x[:n]
        mu = x[n]
        lam = x[n + 1]
        with np.errstate(over="ignore"):
            # exp overflows to inf for extremely negative lam; the log density
            # is then -inf (underflowed) and callers treat such points as
            # rejected without adapting
            inv_tau_sq = np.exp(-2.0 * lam)
            resid_y = y - theta
            resid_mu = theta - mu
            logf = (
                -0.5 * np.sum(resid_y**2 / sig_sq)
                - 0.5 * inv_tau_sq * np.sum(resid_mu**2)
                - (n - 1) * lam
            )
            grad = np.empty(p)
            grad[:n] = resid_y / sig_sq - inv_tau_sq * resid_mu
            grad[n] = inv_tau_sq * np.sum(resid_mu)
            grad[n + 1] = inv_tau_sq * np.sum(resid_mu**2) - (n - 1)
        return logf, grad

    return Target("eight-schools", p, evaluator)


def make_gaussian_mixture(seed: int = DEFAULT_MIXTURE_SEED,
                          modes: np.ndarray | None = None) -> Target:
    """Equally weighted mixture of 10 unit-variance spherical Gaussians in R^10.

    Modes are drawn uniformly on [0, 10]^10 from a dedicated stream seeded by
    `seed`, or taken from `modes` directly (shape (k, p)); the default seed
    fixes the realization so runs are reproducible.
    """
    if modes is None:
        modes = np.random.default_rng(seed).uniform(0.0, 10.0, size=(10, 10))
    else:
        modes = np.asarray(modes, dtype=float)
    k, p = modes.shape

    log_k = np.log(k)

    def evaluator(x: np.ndarray) -> tuple[float, np.ndarray]:
        diffs = modes - x
        comp_logs = -0.5 * (diffs * diffs).sum(axis=1)
        top = comp_logs.max()
        weights = np.exp(comp_logs - top)  # stable log-sum-exp / responsibilities
        total = weights.sum()
        logf = float(top + np.log(total) - log_k)
        grad = (weights / total) @ diffs
        return logf, grad

    mean = modes.mean(axis=0)
    cov = np.eye(p) + np.cov(modes, rowvar=False, bias=True)
    return Target("mixture10", p, evaluator, reference_moments=(mean, cov))


def make_target(name: str) -> Target:
    """Build one of the named benchmark targets."""
    if name == "n4-pos":
        return make_equicorrelated_gaussian(4, 0.999, name=name)
    if name == "n4-neg":
        return make_equicorrelated_gaussian(4, -0.3329, name=name)
    if name == "eight-schools":
        return make_eight_schools()
    if name == "mixture10":
        return make_gaussian_mixture()
    raise ValueError(f"unknown target {name!r}; expected one of {TARGET_NAMES}")
