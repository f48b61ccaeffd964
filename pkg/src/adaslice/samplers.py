"""Markov transition kernels and the chain runner.

Four methods share one configuration type: two gradient-adaptive multivariate
slice samplers built on auxiliary "crumb" draws (covariance-matching and
shrinking-rank), a non-adaptive crumb baseline, and a random-walk Metropolis
sampler that picks its proposal covariance from trial runs.

Each slice-sampler update draws a log slice level below the current point,
then alternates crumb draws and Gaussian proposals from the posterior of the
current point given the crumbs, until a proposal lands inside the slice. The
crumb covariances adapt using gradients at rejected proposals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from time import perf_counter

import numpy as np

from .linalg import (
    InvalidInputError,
    OrthonormalColumns,
    TriangularFactor,
    append_orthonormal_column,
    chud,
    project_orthogonal,
    solve_upper,
    solve_upper_transpose,
)
from .targets import Target

COVARIANCE_MATCHING = "covariance_matching"
SHRINKING_RANK = "shrinking_rank"
NONADAPTIVE_CRUMB = "nonadaptive_crumb"
METROPOLIS_TRIALS = "metropolis_trials"
METHOD_NAMES = (COVARIANCE_MATCHING, SHRINKING_RANK, NONADAPTIVE_CRUMB, METROPOLIS_TRIALS)

GRADIENT_FLOOR = 1e-12  # below this gradient norm there is no direction to adapt along
SIGMA_SQ_FLOOR = 1e-100  # keeps 1/sigma_sq (and so alpha) inside float64 range


class NotAPeakError(ValueError):
    """Parabola has no maximum (non-positive curvature)."""


class MaxCrumbsExceeded(RuntimeError):
    """An update drew more crumbs than the configured safety cap.

    Indicates a bug or a pathological target; carries the state for diagnosis.
    """

    def __init__(self, method: str, x0: np.ndarray, slice_level: float, crumbs: int):
        super().__init__(f"{method}: exceeded {crumbs} crumbs in one update "
                         f"(slice level {slice_level:.6g})")
        self.method = method
        self.x0 = x0
        self.slice_level = slice_level
        self.crumbs = crumbs


@dataclass
class SamplerConfig:
    """Which sampler to run and its tuning knobs.

    sigma_c is the shared tuning parameter: the initial crumb standard
    deviation for the slice samplers, or the first trial run's proposal
    standard deviation for Metropolis. The remaining knobs are method-specific
    and ignored by the others.
    """

    method: str
    sigma_c: float
    theta: float = 1.0                 # covariance-matching precision growth rate
    shrink_factor: float = 0.9         # per-crumb sigma_c decay (shrinking-rank, non-adaptive)
    approximate_u: bool = False        # covariance-matching: skip the second density eval
    max_crumbs_per_update: int = 10_000
    # Metropolis trial protocol
    trial_steps: int = 2000
    trial_accept_range: tuple[float, float] = (0.1, 0.5)
    trial_max_decades: int = 4
    proposal_scale_factor: float = 2.4

    def __post_init__(self):
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHOD_NAMES}")
        if not (np.isfinite(self.sigma_c) and self.sigma_c > 0):
            raise ValueError(f"sigma_c must be positive, got {self.sigma_c}")
        if self.theta <= 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not (0 < self.shrink_factor <= 1):
            raise ValueError(f"shrink_factor must be in (0, 1], got {self.shrink_factor}")


@dataclass
class StepStats:
    """Per-update accounting for one slice-sampler transition."""

    crumbs_drawn: int
    density_evals: int
    accepted_proposal_index: int
    slice_level: float
    logf_accepted: float


@dataclass
class ChainResult:
    """Output of one chain: samples plus cost counters and provenance."""

    samples: np.ndarray
    total_density_evals: int
    total_crumbs: int
    wall_seconds: float
    seed: int
    config: SamplerConfig
    slice_levels: np.ndarray | None = None   # per update, slice samplers only
    sample_logfs: np.ndarray | None = None   # log f at each emitted sample
    step_stats: list[StepStats] | None = None
    error: str | None = None


@dataclass
class CmTraceRecord:
    """One crumb-proposal cycle of the covariance-matching sampler (verification hook)."""

    crumb: np.ndarray
    crumb_factor: np.ndarray      # factor of this crumb's precision, W_k
    proposal_factor: np.ndarray   # factor of the proposal precision before adaptation
    cbar_star: np.ndarray
    cbar: np.ndarray
    proposal: np.ndarray
    accepted: bool
    slice_level: float
    gradient_direction: np.ndarray | None = None
    kappa: float | None = None
    peak_estimate: float | None = None
    sigma_sq: float | None = None
    alpha: float | None = None
    crumb_factor_after: np.ndarray | None = None
    proposal_factor_after: np.ndarray | None = None


@dataclass
class ShrinkTraceRecord:
    """One crumb-proposal cycle of the shrinking-rank/non-adaptive samplers."""

    sigma: float
    crumb: np.ndarray
    cbar: np.ndarray
    proposal_scale: float
    proposal: np.ndarray
    accepted: bool
    basis_ncols: int


def _draw_exponential(rng) -> float:
    """Exponential(1) by inverse CDF."""
    return -math.log1p(-rng.random())


def draw_slice_level(logf_x0: float, rng) -> float:
    """Log slice level: logf_x0 minus an Exponential(1) draw.

    Equivalent to sampling the level uniformly on [0, f(x0)] and taking logs.
    """
    if not np.isfinite(logf_x0):
        raise InvalidInputError(f"logf_x0 must be finite, got {logf_x0}")
    return logf_x0 - _draw_exponential(rng)


def fit_kappa(logf_x: float, grad_norm: float, logf_u: float, delta: float) -> float:
    """Curvature of the parabola through the log density along the gradient.

    Fits l(t) = -0.5*kappa*t^2 + beta*t + gamma to value and slope at t=0 and
    a second value at t=delta, and returns kappa (may be <= 0 if the log
    density is locally flat or convex along the cut; callers handle that).
    """
    if not (math.isfinite(logf_x) and math.isfinite(grad_norm)
            and math.isfinite(logf_u) and math.isfinite(delta)):
        raise InvalidInputError("fit_kappa inputs must be finite")
    if delta <= 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    return -2.0 / delta**2 * (logf_u - logf_x - grad_norm * delta)


def parabola_peak(logf_x: float, grad_norm: float, kappa: float) -> float:
    """Maximum value of the fitted parabola: 0.5*grad_norm^2/kappa + logf_x."""
    if kappa <= 0:
        raise NotAPeakError(f"kappa must be positive for a peak, got {kappa}")
    return 0.5 * grad_norm**2 / kappa + logf_x


def conditional_variance(peak: float, slice_level: float, kappa: float) -> float:
    """Variance of uniform sampling across the slice along the fitted cut.

    The parabola with curvature kappa peaking at `peak` has diameter
    d = sqrt(8*(peak - slice_level)/kappa) at the slice level; the variance of
    a uniform draw over that interval is d^2/12.
    """
    if kappa <= 0:
        raise InvalidInputError(f"kappa must be positive, got {kappa}")
    if peak < slice_level:
        raise InvalidInputError(f"peak {peak} below slice level {slice_level}")
    return (2.0 / 3.0) * (peak - slice_level) / kappa


def crumb_precision_update(
    R: TriangularFactor, g: np.ndarray, sigma_sq: float, theta: float
) -> tuple[TriangularFactor, TriangularFactor, float]:
    """Next crumb and proposal precision factors from the fitted slice variance.

    Given the current proposal precision factor R (R^T R = Lambda), pick the
    next crumb precision W = theta*Lambda + alpha*g g^T with alpha chosen so
    the updated proposal precision (1+theta)*Lambda + alpha*g g^T equals
    1/sigma_sq along the unit direction g; alpha is clamped at zero to keep W
    positive definite. Returns (crumb factor, proposal factor, alpha).
    """
    g = np.asarray(g, dtype=float)
    if abs(np.linalg.norm(g) - 1.0) > 1e-10:
        raise InvalidInputError("g must be a unit vector")
    if sigma_sq <= 0:
        raise InvalidInputError(f"sigma_sq must be positive, got {sigma_sq}")
    if theta <= 0:
        raise InvalidInputError(f"theta must be positive, got {theta}")
    rg = R.entries @ g
    alpha = max(1.0 / sigma_sq - (1.0 + theta) * (rg @ rg), 0.0)
    crumb_scaled = R.scaled(math.sqrt(theta))
    proposal_scaled = R.scaled(math.sqrt(1.0 + theta))
    if alpha == 0.0:
        return crumb_scaled, proposal_scaled, alpha
    v = math.sqrt(alpha) * g
    return chud(crumb_scaled, v), chud(proposal_scaled, v), alpha


def cm_step(
    x0: np.ndarray,
    logf_x0: float,
    target: Target,
    config: SamplerConfig,
    rng,
    trace: list | None = None,
) -> tuple[np.ndarray, float, StepStats]:
    """One covariance-matching slice-sampler update.

    Draws a slice level below log f(x0), then repeats: draw a crumb from
    N(x0, W^-1), propose from the posterior N(cbar, Lambda^-1) of x0 given all
    crumbs so far, and accept if the proposal is inside the slice. On
    rejection, a parabola fitted to the log density along the gradient at the
    rejected proposal estimates the slice's conditional variance in that
    direction, and the next crumb precision is chosen to match it. All factor
    work is O(p^2) per crumb via rank-one updates and triangular solves.

    With config.approximate_u, the second density evaluation of the parabola
    fit is skipped and the slice level is used in its place, halving the
    evaluations spent per rejection; the slice variance is then estimated
    from each cut's own fitted peak rather than a running maximum, since one
    inflated extrapolation through the substituted value would otherwise
    poison the rest of the update (the running maximum only ever grows).

    Adaptation quantities depend only on the slice level and on data observed
    at rejected proposals, never on the current point's own density, which
    keeps the update reversible; this is why the peak estimate starts at the
    slice level.
    """
    p = target.dim
    theta = config.theta
    level = draw_slice_level(logf_x0, rng)
    peak_est = level  # running estimate of the local log-density maximum
    factor_r = TriangularFactor.scaled_identity(p, 1.0 / config.sigma_c)
    factor_f = factor_r
    cbar_star = np.zeros(p)
    evals = 0

    for k in range(1, config.max_crumbs_per_update + 1):
        crumb = x0 + solve_upper(factor_f, rng.standard_normal(p))
        cbar_star = cbar_star + factor_f.entries.T @ (factor_f.entries @ crumb)
        cbar = solve_upper(factor_r, solve_upper_transpose(factor_r, cbar_star))
        x = cbar + solve_upper(factor_r, rng.standard_normal(p))
        logf_x, grad = target.evaluate(x)
        evals += 1
        record = None
        if trace is not None:
            record = CmTraceRecord(
                crumb=crumb.copy(),
                crumb_factor=factor_f.entries.copy(),
                proposal_factor=factor_r.entries.copy(),
                cbar_star=cbar_star.copy(),
                cbar=cbar.copy(),
                proposal=x.copy(),
                accepted=logf_x >= level,
                slice_level=level,
            )
            trace.append(record)
        if logf_x >= level:
            stats = StepStats(k, evals, k, level, logf_x)
            return x, logf_x, stats

        grad_norm = float(np.linalg.norm(grad))
        adapted = False
        # non-finite values mean the density underflowed at an extreme
        # proposal; there is nothing usable to adapt along
        if np.isfinite(logf_x) and np.isfinite(grad_norm) and grad_norm >= GRADIENT_FLOOR:
            gdir = grad / grad_norm
            dist = float(np.linalg.norm(x - crumb))
            if dist <= 1e-12 * config.sigma_c:
                dist = 1e-8 * config.sigma_c  # proposal coincided with the crumb
            if config.approximate_u:
                logf_u = level
            else:
                logf_u, _ = target.evaluate(x + dist * gdir)
                evals += 1
            kappa = fit_kappa(logf_x, grad_norm, logf_u, dist) if np.isfinite(logf_u) else 0.0
            if kappa > 0 and np.isfinite(kappa):
                peak_candidate = parabola_peak(logf_x, grad_norm, kappa)
                if config.approximate_u:
                    # this cut's own peak; it sits at or above the level by
                    # construction (the fitted parabola attains the level)
                    peak = max(peak_candidate, level)
                else:
                    if np.isfinite(peak_candidate):
                        peak_est = max(peak_est, peak_candidate)
                    peak = peak_est
                sigma_sq = conditional_variance(peak, level, kappa) if np.isfinite(peak) else 0.0
                # a degenerate or underflowed fit means no usable in-slice
                # extent along this direction: take the rescale-only branch
                if sigma_sq > SIGMA_SQ_FLOOR:
                    factor_f, factor_r, alpha = crumb_precision_update(
                        factor_r, gdir, sigma_sq, theta
                    )
                    adapted = True
                    if record is not None:
                        record.gradient_direction = gdir.copy()
                        record.kappa = kappa
                        record.peak_estimate = peak
                        record.sigma_sq = sigma_sq
                        record.alpha = alpha
        if not adapted:
            # Flat/convex cut or vanishing gradient: no direction to match, so
            # rescale both precisions (the alpha = 0 branch of the update).
            factor_f = factor_r.scaled(math.sqrt(theta))
            factor_r = factor_r.scaled(math.sqrt(1.0 + theta))
            if record is not None:
                record.alpha = 0.0
        if record is not None:
            record.crumb_factor_after = factor_f.entries.copy()
            record.proposal_factor_after = factor_r.entries.copy()

    raise MaxCrumbsExceeded(COVARIANCE_MATCHING, x0, level, config.max_crumbs_per_update)


def _shrinking_crumb_step(
    x0: np.ndarray,
    logf_x0: float,
    target: Target,
    config: SamplerConfig,
    rng,
    adapt_rank: bool,
    trace: list | None = None,
    start_basis: OrthonormalColumns | None = None,
) -> tuple[np.ndarray, float, StepStats]:
    """Shared engine for the shrinking-rank and non-adaptive crumb samplers.

    Crumbs are spherical in the orthogonal complement of the basis J (empty
    unless adapt_rank grows it), centered on x0, with standard deviation
    sigma_c shrunk by the configured factor after each rejected proposal. The
    proposal is the Gaussian posterior of x0 given the crumbs: since crumb k
    has scalar precision sigma_k^-2 in the live subspace, the posterior mean
    is the precision-weighted crumb mean and the posterior precision is the
    running precision sum. (With shrink_factor = 1 this reduces to the plain
    mean of the crumbs and scale sigma_c/sqrt(k).) Directions in J carry zero
    crumb variance, so the proposal never moves along them.
    """
    p = target.dim
    level = draw_slice_level(logf_x0, rng)
    sigma = config.sigma_c
    basis = start_basis if start_basis is not None else OrthonormalColumns.empty(p)
    weight_sum = 0.0
    weighted_crumb_sum = np.zeros(p)  # x0-origin frame
    evals = 0

    for k in range(1, config.max_crumbs_per_update + 1):
        crumb = sigma * rng.standard_normal(p)
        weight = sigma**-2.0
        weight_sum += weight
        weighted_crumb_sum = weighted_crumb_sum + weight * crumb
        cbar = weighted_crumb_sum / weight_sum
        scale = weight_sum**-0.5
        x = x0 + project_orthogonal(basis, cbar + scale * rng.standard_normal(p))
        logf_x, grad = target.evaluate(x)
        evals += 1
        if trace is not None:
            trace.append(ShrinkTraceRecord(
                sigma=sigma,
                crumb=crumb.copy(),
                cbar=cbar.copy(),
                proposal_scale=scale,
                proposal=x.copy(),
                accepted=logf_x >= level,
                basis_ncols=basis.ncols,
            ))
        if logf_x >= level:
            stats = StepStats(k, evals, k, level, logf_x)
            return x, logf_x, stats

        if adapt_rank and basis.ncols < p - 1:
            grad_norm = float(np.linalg.norm(grad))
            if np.isfinite(grad_norm) and grad_norm >= GRADIENT_FLOOR:
                residual = project_orthogonal(basis, grad)
                # adapt only when the gradient is within 60 degrees of its
                # projection outside the span of the basis
                if residual @ grad > 0.5 * np.linalg.norm(residual) * grad_norm:
                    basis = append_orthonormal_column(basis, residual)
        sigma *= config.shrink_factor

    method = SHRINKING_RANK if adapt_rank else NONADAPTIVE_CRUMB
    raise MaxCrumbsExceeded(method, x0, level, config.max_crumbs_per_update)


def sr_step(
    x0: np.ndarray,
    logf_x0: float,
    target: Target,
    config: SamplerConfig,
    rng,
    trace: list | None = None,
    start_basis: OrthonormalColumns | None = None,
) -> tuple[np.ndarray, float, StepStats]:
    """One shrinking-rank slice-sampler update.

    On each rejection, the gradient's component outside the current basis is
    appended as a new zero-variance direction (when the basis has room and the
    gradient passes the 60-degree gate), and the crumb standard deviation
    shrinks by config.shrink_factor.
    """
    return _shrinking_crumb_step(
        x0, logf_x0, target, config, rng, adapt_rank=True,
        trace=trace, start_basis=start_basis,
    )


def na_step(
    x0: np.ndarray,
    logf_x0: float,
    target: Target,
    config: SamplerConfig,
    rng,
    trace: list | None = None,
) -> tuple[np.ndarray, float, StepStats]:
    """One non-adaptive crumb update: sr_step with the basis permanently empty."""
    return _shrinking_crumb_step(
        x0, logf_x0, target, config, rng, adapt_rank=False, trace=trace,
    )


_STEP_KERNELS = {
    COVARIANCE_MATCHING: cm_step,
    SHRINKING_RANK: sr_step,
    NONADAPTIVE_CRUMB: na_step,
}


def _spherical_trial(target, x_start, logf_start, scale, steps, rng):
    """Short random-walk Metropolis run with a spherical proposal.

    Returns (samples, final point, final log f, acceptance rate).
    """
    p = target.dim
    x = x_start.copy()
    logf = logf_start
    samples = np.empty((steps, p))
    accepted = 0
    for i in range(steps):
        prop = x + scale * rng.standard_normal(p)
        logf_prop, _ = target.evaluate(prop)
        diff = logf_prop - logf
        if diff >= 0 or rng.random() < math.exp(diff):
            x = prop
            logf = logf_prop
            accepted += 1
        samples[i] = x
    return samples, x, logf, accepted / steps


def metropolis_trials_run(
    target: Target,
    config: SamplerConfig,
    rng,
    N: int,
    x0: np.ndarray | None = None,
    seed: int = 0,
) -> ChainResult:
    """Random-walk Metropolis with automatic proposal selection from trial runs.

    Tuning phase: short spherical-proposal chains at scales sigma_c * 10^j,
    searching j = 0, +1, -1, ... out to +/- trial_max_decades, stopping at the
    first scale whose acceptance rate falls in trial_accept_range. If none
    qualifies the result carries error="tuning_failed" and no samples. Main
    phase: the qualifying trial chain's sample covariance (Cholesky factor
    scaled by proposal_scale_factor/sqrt(p), falling back to the spherical
    trial proposal if the covariance is not positive definite) drives an
    N-step random-walk Metropolis chain. Every density evaluation, trial or
    main, is counted.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    p = target.dim
    start_evals = target.eval_count
    t_start = perf_counter()
    x = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).copy()

    decades = [0]
    for j in range(1, config.trial_max_decades + 1):
        decades.extend([j, -j])
    lo, hi = config.trial_accept_range

    logf_start, _ = target.evaluate(x)
    winner = None
    for j in decades:
        scale = config.sigma_c * 10.0**j
        samples, x_end, logf_end, rate = _spherical_trial(
            target, x, logf_start, scale, config.trial_steps, rng
        )
        if lo <= rate <= hi:
            winner = (scale, samples, x_end, logf_end)
            break
    if winner is None:
        return ChainResult(
            samples=np.empty((0, p)),
            total_density_evals=target.eval_count - start_evals,
            total_crumbs=0,
            wall_seconds=perf_counter() - t_start,
            seed=seed,
            config=config,
            error="tuning_failed",
        )

    scale, trial_samples, x, logf = winner
    cov = np.atleast_2d(np.cov(trial_samples, rowvar=False))
    try:
        shape = np.linalg.cholesky(cov) * (config.proposal_scale_factor / math.sqrt(p))
    except np.linalg.LinAlgError:
        shape = None  # degenerate trial covariance: keep the spherical proposal

    samples = np.empty((N, p))
    for i in range(N):
        z = rng.standard_normal(p)
        prop = x + (scale * z if shape is None else shape @ z)
        logf_prop, _ = target.evaluate(prop)
        diff = logf_prop - logf
        if diff >= 0 or rng.random() < math.exp(diff):
            x = prop
            logf = logf_prop
        samples[i] = x

    return ChainResult(
        samples=samples,
        total_density_evals=target.eval_count - start_evals,
        total_crumbs=0,
        wall_seconds=perf_counter() - t_start,
        seed=seed,
        config=config,
    )


def run_chain(
    config: SamplerConfig,
    target: Target,
    N: int,
    seed: int,
    x0: np.ndarray | None = None,
    keep_step_stats: bool = False,
) -> ChainResult:
    """Run one chain of N updates; fully deterministic given (config, target, N, seed).

    Slice samplers emit the accepted proposal of each update; Metropolis emits
    the state after each proposal cycle. A max-crumbs diagnostic aborts with
    the partial samples and an error flag instead of raising.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    rng = np.random.default_rng(seed)
    if config.method == METROPOLIS_TRIALS:
        return metropolis_trials_run(target, config, rng, N, x0=x0, seed=seed)

    step = _STEP_KERNELS[config.method]
    p = target.dim
    start_evals = target.eval_count
    t_start = perf_counter()
    x = np.zeros(p) if x0 is None else np.asarray(x0, dtype=float).copy()
    logf, _ = target.evaluate(x)

    samples = np.empty((N, p))
    slice_levels = np.empty(N)
    sample_logfs = np.empty(N)
    stats_list: list[StepStats] | None = [] if keep_step_stats else None
    total_crumbs = 0
    error = None
    n_done = 0
    # overflow to inf inside an update is expected at extreme tunings and is
    # handled by the guards in the step kernels, so do not warn about it
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(N):
            try:
                x, logf, stats = step(x, logf, target, config, rng)
            except MaxCrumbsExceeded as exc:
                error = f"max_crumbs_exceeded: {exc}"
                break
            except (InvalidInputError, FloatingPointError, np.linalg.LinAlgError) as exc:
                # numeric blowup inside an update (overflowed precisions and
                # the like): keep the partial chain and flag it, don't crash
                error = f"numeric_failure: {exc}"
                break
            samples[i] = x
            slice_levels[i] = stats.slice_level
            sample_logfs[i] = stats.logf_accepted
            total_crumbs += stats.crumbs_drawn
            if stats_list is not None:
                stats_list.append(stats)
            n_done = i + 1

    return ChainResult(
        samples=samples[:n_done],
        total_density_evals=target.eval_count - start_evals,
        total_crumbs=total_crumbs,
        wall_seconds=perf_counter() - t_start,
        seed=seed,
        config=config,
        slice_levels=slice_levels[:n_done],
        sample_logfs=sample_logfs[:n_done],
        step_stats=stats_list,
        error=error,
    )
