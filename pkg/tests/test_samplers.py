"""Transition kernels: parabola-fit machinery, precision updates, trace oracles,
and Monte Carlo checks of stationarity and cost accounting."""

import math

import numpy as np
import pytest
from scipy import stats

from adaslice.linalg import InvalidInputError, OrthonormalColumns, TriangularFactor
from adaslice.samplers import (
    ChainResult,
    MaxCrumbsExceeded,
    NotAPeakError,
    SamplerConfig,
    cm_step,
    conditional_variance,
    crumb_precision_update,
    draw_slice_level,
    fit_kappa,
    metropolis_trials_run,
    na_step,
    parabola_peak,
    run_chain,
    sr_step,
    _spherical_trial,
)
from adaslice.targets import Target, make_equicorrelated_gaussian, make_target
from conftest import replay_cm_shadow

RNG = np.random.default_rng(20240119)


def normal_1d() -> Target:
    return Target("normal1d", 1, lambda x: (-0.5 * float(x @ x), -x))


def std_normal_2d() -> Target:
    return make_equicorrelated_gaussian(2, 0.0, name="n2-iid")


class FakeRng:
    """Deterministic stand-in feeding fixed uniforms to the level draw."""

    def __init__(self, uniforms):
        self._uniforms = list(uniforms)

    def random(self):
        return self._uniforms.pop(0)


class TestDrawSliceLevel:
    def test_stubbed_exponential(self):
        # uniform chosen so the inverse-CDF exponential draw equals 0.7
        rng = FakeRng([1.0 - math.exp(-0.7)])
        assert draw_slice_level(-1.2, rng) == pytest.approx(-1.9, rel=1e-12)

    def test_always_below_current_log_density(self):
        rng = np.random.default_rng(0)
        assert all(draw_slice_level(3.25, rng) <= 3.25 for _ in range(1000))

    def test_gap_is_unit_exponential(self):
        rng = np.random.default_rng(1)
        gaps = np.array([0.0 - draw_slice_level(0.0, rng) for _ in range(100_000)])
        assert stats.kstest(gaps, "expon").pvalue > 0.001

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidInputError):
            draw_slice_level(np.inf, np.random.default_rng(0))


class TestParabolaFit:
    def test_standard_normal_curvature(self):
        # 1-D standard normal at x=1: the cut through u=0 recovers curvature 1
        assert fit_kappa(-0.5, 1.0, 0.0, 1.0) == pytest.approx(1.0)

    def test_linear_cut_gives_zero(self):
        logf_x, grad_norm, delta = -2.0, 1.3, 0.8
        assert fit_kappa(logf_x, grad_norm, logf_x + delta * grad_norm, delta) == pytest.approx(0.0)

    def test_recovers_manufactured_curvature(self):
        kappa0, delta, logf_x, grad_norm = 3.5, 0.25, -1.0, 2.0
        logf_u = logf_x + delta * grad_norm - 0.5 * kappa0 * delta**2
        assert fit_kappa(logf_x, grad_norm, logf_u, delta) == pytest.approx(3.5, abs=1e-12)

    def test_nonpositive_delta_rejected(self):
        with pytest.raises(InvalidInputError):
            fit_kappa(0.0, 1.0, 0.0, 0.0)

    def test_peak_with_zero_gradient_is_current_value(self):
        assert parabola_peak(-1.25, 0.0, 2.0) == -1.25

    def test_peak_standard_normal(self):
        assert parabola_peak(-0.5, 1.0, 1.0) == pytest.approx(0.0)

    def test_peak_arithmetic(self):
        assert parabola_peak(1.0, 2.0, 2.0) == pytest.approx(2.0)

    def test_peak_requires_positive_curvature(self):
        with pytest.raises(NotAPeakError):
            parabola_peak(0.0, 1.0, 0.0)

    def test_conditional_variance_formula(self):
        assert conditional_variance(3.0, 0.0, 2.0) == pytest.approx(1.0)

    def test_conditional_variance_uniform_interval_identity(self):
        # standard normal slice at level -2: |x| <= 2, so variance of U(-2, 2)
        assert conditional_variance(0.0, -2.0, 1.0) == pytest.approx(16.0 / 12.0)

    def test_conditional_variance_degenerate_boundary(self):
        assert conditional_variance(-1.0, -1.0, 2.0) == 0.0

    def test_conditional_variance_rejects_bad_inputs(self):
        with pytest.raises(InvalidInputError):
            conditional_variance(0.0, 1.0, 1.0)
        with pytest.raises(InvalidInputError):
            conditional_variance(1.0, 0.0, -1.0)


class TestCrumbPrecisionUpdate:
    def test_clamp_branch_rescales(self):
        r = TriangularFactor(np.diag([2.0, 3.0]))
        g = np.array([1.0, 0.0])
        # 1/sigma_sq = 1 <= (1+theta) * |Rg|^2 = 8 -> alpha clamps to zero
        f_next, r_next, alpha = crumb_precision_update(r, g, 1.0, 1.0)
        assert alpha == 0.0
        assert np.allclose(f_next.entries, r.entries * np.sqrt(1.0))
        assert np.allclose(r_next.entries, r.entries * np.sqrt(2.0))

    def test_scalar_case(self):
        r = TriangularFactor(np.array([[1.0]]))
        f_next, r_next, alpha = crumb_precision_update(r, np.array([1.0]), 0.25, 1.0)
        assert alpha == pytest.approx(2.0)
        assert r_next.matrix()[0, 0] == pytest.approx(4.0)
        assert f_next.matrix()[0, 0] == pytest.approx(3.0)  # theta*Lambda + alpha

    def test_dense_oracle_random_cases(self):
        theta = 1.0
        for _ in range(50):
            a = RNG.standard_normal((5, 5))
            r = TriangularFactor(np.linalg.cholesky(a @ a.T + 0.05 * np.eye(5)).T)
            g = RNG.standard_normal(5)
            g /= np.linalg.norm(g)
            sigma_sq = 10.0 ** RNG.uniform(-3, 0)
            f_next, r_next, alpha = crumb_precision_update(r, g, sigma_sq, theta)
            lam = r.matrix()
            w_expected = theta * lam + alpha * np.outer(g, g)
            lam_expected = (1 + theta) * lam + alpha * np.outer(g, g)
            assert np.linalg.norm(f_next.matrix() - w_expected) <= 1e-10 * np.linalg.norm(w_expected)
            assert np.linalg.norm(r_next.matrix() - lam_expected) <= 1e-10 * np.linalg.norm(lam_expected)
            if alpha > 0:
                cond = g @ r_next.matrix() @ g
                assert abs(cond - 1.0 / sigma_sq) <= 1e-8 / sigma_sq

    def test_non_unit_direction_rejected(self):
        r = TriangularFactor(np.eye(2))
        with pytest.raises(InvalidInputError):
            crumb_precision_update(r, np.array([1.0, 1.0]), 1.0, 1.0)


class TestCovarianceMatchingStep:
    def run_traced(self, target, sigma_c, n_updates, seed, **cfg_kwargs):
        config = SamplerConfig("covariance_matching", sigma_c, **cfg_kwargs)
        rng = np.random.default_rng(seed)
        x = np.zeros(target.dim)
        logf, _ = target.evaluate(x)
        traces = []
        for _ in range(n_updates):
            trace = []
            x, logf, _ = cm_step(x, logf, target, config, rng, trace=trace)
            traces.append(trace)
        return traces

    def test_dense_shadow_equivalence(self):
        target = make_target("n4-pos")
        traces = self.run_traced(target, sigma_c=2.0, n_updates=400, seed=3)
        events = sum(replay_cm_shadow(t, 2.0, 1.0, 4) for t in traces)
        assert events >= 1000

    def test_conditional_precision_identity(self):
        target = make_target("n4-pos")
        traces = self.run_traced(target, sigma_c=5.0, n_updates=400, seed=4)
        n_adaptations = 0
        for trace in traces:
            for rec in trace:
                if rec.alpha is not None and rec.alpha > 0:
                    lam_next = rec.proposal_factor_after.T @ rec.proposal_factor_after
                    cond = rec.gradient_direction @ lam_next @ rec.gradient_direction
                    assert abs(cond - 1.0 / rec.sigma_sq) <= 1e-8 / rec.sigma_sq
                    n_adaptations += 1
        assert n_adaptations >= 200

    def test_accepted_point_in_slice(self):
        target = std_normal_2d()
        result = run_chain(SamplerConfig("covariance_matching", 1.0), target, 2000, seed=5)
        assert result.error is None
        assert np.all(result.sample_logfs >= result.slice_levels)

    def test_eval_accounting_exact_u(self):
        target = make_target("n4-pos")
        result = run_chain(
            SamplerConfig("covariance_matching", 1.0), target, 500, seed=6,
            keep_step_stats=True,
        )
        for s in result.step_stats:
            assert s.density_evals == 2 * (s.crumbs_drawn - 1) + 1
            assert s.accepted_proposal_index == s.crumbs_drawn

    def test_eval_accounting_approximate_u(self):
        target = make_target("n4-pos")
        result = run_chain(
            SamplerConfig("covariance_matching", 1.0, approximate_u=True), target, 500,
            seed=6, keep_step_stats=True,
        )
        for s in result.step_stats:
            assert s.density_evals == s.crumbs_drawn

    def test_stationary_on_iid_normal(self):
        target = std_normal_2d()
        result = run_chain(SamplerConfig("covariance_matching", 1.0), target, 30_000, seed=7)
        x = result.samples
        assert np.all(np.abs(x.mean(axis=0)) < 4.0 / np.sqrt(5000))
        assert np.all(np.abs(x.var(axis=0) - 1.0) < 0.1)


class TestShrinkingRankStep:
    def run_traced(self, target, config, n_updates, seed, step=sr_step, **kwargs):
        rng = np.random.default_rng(seed)
        x = np.zeros(target.dim)
        logf, _ = target.evaluate(x)
        traces = []
        for _ in range(n_updates):
            trace = []
            x, logf, _ = step(x, logf, target, config, rng, trace=trace, **kwargs)
            traces.append(trace)
        return traces

    def test_1d_never_gains_basis_columns(self):
        config = SamplerConfig("shrinking_rank", 20.0)  # oversized: plenty of rejections
        traces = self.run_traced(normal_1d(), config, 200, seed=8)
        assert any(len(t) > 1 for t in traces)
        for trace in traces:
            assert all(rec.basis_ncols == 0 for rec in trace)

    def test_basis_never_exceeds_p_minus_1(self):
        config = SamplerConfig("shrinking_rank", 50.0)
        traces = self.run_traced(make_target("n4-pos"), config, 300, seed=9)
        assert max(rec.basis_ncols for t in traces for rec in t) <= 3

    def test_forced_basis_blocks_first_coordinate(self):
        target = std_normal_2d()
        config = SamplerConfig("shrinking_rank", 1.0)
        basis = OrthonormalColumns(np.array([[1.0], [0.0]]))
        rng = np.random.default_rng(10)
        x0 = np.array([0.3, -0.2])
        logf, _ = target.evaluate(x0)
        for _ in range(50):
            trace = []
            x1, logf1, _ = sr_step(x0, logf, target, config, rng,
                                   trace=trace, start_basis=basis)
            for rec in trace:
                offset = rec.proposal - x0
                assert offset[0] == 0.0
            assert x1[0] == x0[0]

    def test_crumb_sigma_shrinks_geometrically(self):
        config = SamplerConfig("nonadaptive_crumb", 30.0, shrink_factor=0.9)
        traces = self.run_traced(normal_1d(), config, 100, seed=11, step=na_step)
        for trace in traces:
            for k, rec in enumerate(trace):
                assert rec.sigma == pytest.approx(30.0 * 0.9**k)

    def test_na_equals_sr_when_rank_capped(self):
        # p = 1 caps the basis at zero columns, so the two methods coincide
        cfg_sr = SamplerConfig("shrinking_rank", 5.0)
        cfg_na = SamplerConfig("nonadaptive_crumb", 5.0)
        a = run_chain(cfg_sr, normal_1d(), 500, seed=12)
        b = run_chain(cfg_na, normal_1d(), 500, seed=12)
        assert np.array_equal(a.samples, b.samples)
        assert a.total_crumbs == b.total_crumbs

    def test_unweighted_mean_recurrence_when_no_shrink(self):
        # with shrink_factor = 1 the posterior mean is the plain crumb mean
        # and the proposal scale is sigma_c/sqrt(k)
        config = SamplerConfig("nonadaptive_crumb", 8.0, shrink_factor=1.0)
        traces = self.run_traced(std_normal_2d(), config, 100, seed=13, step=na_step)
        for trace in traces:
            crumbs = np.array([rec.crumb for rec in trace])
            for k, rec in enumerate(trace, start=1):
                assert np.allclose(rec.cbar, crumbs[:k].mean(axis=0), rtol=1e-12, atol=1e-12)
                assert rec.proposal_scale == pytest.approx(8.0 / math.sqrt(k))

    def test_slice_membership(self):
        for method in ("shrinking_rank", "nonadaptive_crumb"):
            result = run_chain(SamplerConfig(method, 1.0), std_normal_2d(), 2000, seed=14)
            assert np.all(result.sample_logfs >= result.slice_levels)

    def test_eval_accounting(self):
        result = run_chain(
            SamplerConfig("shrinking_rank", 1.0), make_target("n4-pos"), 500,
            seed=15, keep_step_stats=True,
        )
        for s in result.step_stats:
            assert s.density_evals == s.crumbs_drawn

    def test_stationary_on_correlated_gaussian(self):
        target = make_target("n4-pos")
        result = run_chain(SamplerConfig("shrinking_rank", 1.0), target, 30_000, seed=16)
        x = result.samples
        assert np.all(np.abs(x.var(axis=0) - 1.0) < 0.15)


class TestMetropolisTrials:
    def test_zero_scale_proposals_always_accepted(self):
        target = normal_1d()
        logf0, _ = target.evaluate(np.zeros(1))
        rng = np.random.default_rng(17)
        _, _, _, rate = _spherical_trial(target, np.zeros(1), logf0, 0.0, 200, rng)
        assert rate == 1.0

    def test_well_tuned_acceptance_rate(self):
        target = normal_1d()
        config = SamplerConfig("metropolis_trials", 3.0)
        result = run_chain(config, target, 100_000, seed=18)
        assert result.error is None
        moved = np.any(np.diff(result.samples, axis=0) != 0.0, axis=1)
        assert 0.3 <= moved.mean() <= 0.6

    def test_detailed_balance_region_flows(self):
        target = normal_1d()
        config = SamplerConfig("metropolis_trials", 3.0)
        result = run_chain(config, target, 200_000, seed=19)
        x = np.abs(result.samples[:, 0])
        region = np.digitize(x, [0.5, 1.1])
        flows = np.zeros((3, 3))
        np.add.at(flows, (region[:-1], region[1:]), 1)
        for i in range(3):
            for j in range(i + 1, 3):
                diff = abs(flows[i, j] - flows[j, i])
                assert diff <= 5.0 * math.sqrt(flows[i, j] + flows[j, i]) + 10.0

    def test_tuning_failure_is_flagged_not_raised(self):
        result = run_chain(SamplerConfig("metropolis_trials", 1.0), make_target("n4-pos"),
                           1000, seed=20)
        assert result.error == "tuning_failed"
        assert result.samples.shape == (0, 4)
        assert result.total_density_evals > 0

    def test_all_evaluations_counted(self):
        target = normal_1d()
        result = run_chain(SamplerConfig("metropolis_trials", 3.0), target, 5000, seed=21)
        assert result.total_density_evals == target.eval_count


class TestRunChain:
    def test_deterministic_given_seed(self):
        for method in ("covariance_matching", "shrinking_rank", "nonadaptive_crumb",
                       "metropolis_trials"):
            cfg = SamplerConfig(method, 2.0)
            a = run_chain(cfg, make_target("n4-neg"), 300, seed=22)
            b = run_chain(cfg, make_target("n4-neg"), 300, seed=22)
            assert np.array_equal(a.samples, b.samples)
            assert a.total_density_evals == b.total_density_evals

    def test_single_step_chain(self):
        result = run_chain(SamplerConfig("covariance_matching", 1.0), std_normal_2d(), 1, seed=23)
        assert result.samples.shape == (1, 2)

    def test_counter_reconciliation(self):
        target = make_target("n4-pos")
        result = run_chain(SamplerConfig("covariance_matching", 1.0), target, 200, seed=24)
        assert result.total_density_evals == target.eval_count

    def test_max_crumbs_aborts_with_partial_results(self):
        config = SamplerConfig("covariance_matching", 1000.0, max_crumbs_per_update=2)
        result = run_chain(config, make_target("n4-pos"), 100, seed=25)
        assert result.error is not None and "max_crumbs" in result.error
        assert result.samples.shape[0] < 100

    def test_max_crumbs_exception_carries_state(self):
        config = SamplerConfig("shrinking_rank", 1000.0, max_crumbs_per_update=2)
        target = make_target("n4-pos")
        rng = np.random.default_rng(26)
        with pytest.raises(MaxCrumbsExceeded) as excinfo:
            for _ in range(50):
                sr_step(np.zeros(4), 0.0, target, config, rng)
        assert excinfo.value.crumbs == 2
        assert excinfo.value.x0.shape == (4,)

    def test_custom_start_point(self):
        start = np.array([1.0, 2.0, 3.0, 4.0])
        result = run_chain(SamplerConfig("shrinking_rank", 0.5), make_target("n4-pos"),
                           50, seed=27, x0=start)
        assert result.samples.shape == (50, 4)

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            SamplerConfig("covariance_matching", -1.0)
        with pytest.raises(ValueError):
            SamplerConfig("nope", 1.0)
        with pytest.raises(ValueError):
            SamplerConfig("shrinking_rank", 1.0, shrink_factor=0.0)
