"""
Unit tests for the two-level model likelihood and its ML fits.

The collapsed likelihood is checked against a dense multivariate normal
density built from individual records, its analytic gradient against
finite differences, and the fits against grid search and known boundary
solutions.
"""

import unittest

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from lmm import (
    EstimationSettings,
    MarginalModel,
    ModelParameters,
    build_design,
    fit_random_intercept,
    fit_random_slope,
    gls_fixed_effects,
    marginal_loglik,
)
from lmm.fit import VARIANCE_CEILING, _Cholesky, _Face, _Objective
from lmm.parameterization import chain_gradient, pack, unpack
from simgen import SCENARIO_MODELS, GeneratorConfig, generate
from trial_data import SiteSufficientStats, TrialDataset, summarize_arrays
from utils.errors import DomainError, RankError, SchemaError, UsageError

# Test constants
ONE_SITE = [SiteSufficientStats("a", 1, 1, 0.0, 0.0, 0.0, 0.0)]
LOG_DENSITY_UNIT = -0.9189
LOG_DENSITY_VAR_TWO = -1.2655
GRADIENT_POINTS = 20
SHIFT = 1000.0


def _toy_dataset(seed: int = 0, J: int = 6, n_low: int = 4, n_high: int = 9) -> TrialDataset:  # noqa: N803
    """Small trial with site effects, uneven arms and one site covariate."""
    rng = np.random.default_rng(seed)
    phi = rng.normal(size=(J, 1))
    site_idx, z = [], []
    for j in range(J):
        n_j = int(rng.integers(n_low, n_high, endpoint=True))
        arms = np.r_[0, 1, rng.integers(0, 2, size=n_j - 2)]
        site_idx.extend([j] * n_j)
        z.extend(arms.tolist())
    site_idx, z = np.array(site_idx), np.array(z)
    intercepts = 50 + 4 * phi[:, 0] + rng.normal(scale=3.0, size=J)
    slopes = 5 + 2 * phi[:, 0] + rng.normal(scale=2.0, size=J)
    y = (
        intercepts[site_idx]
        + z * slopes[site_idx]
        + rng.normal(scale=np.where(z == 1, 2.5, 2.0))
    )
    return TrialDataset.from_arrays([f"s{j}" for j in range(J)], site_idx, z, y, phi_x=phi)


def _dense_loglik(
    dataset: TrialDataset,
    T: np.ndarray,
    sigma0_sq: float,
    sigma1_sq: float | None,
    beta: np.ndarray,
    design: np.ndarray,
) -> float:
    """Sum over sites of the full multivariate normal density of their records."""
    k = T.shape[0]
    total = 0.0
    for j in range(dataset.J):
        mask = dataset.site_idx == j
        if k == 1:
            mask &= dataset.z == 0
        z = dataset.z[mask].astype(float)
        y = dataset.y[mask]
        w = design[j]
        if k == 1:
            mean = np.full(y.shape, w @ beta)
            Z = np.ones((y.shape[0], 1))
            residual = np.full(y.shape, sigma0_sq)
        else:
            q = w.shape[0]
            mean = w @ beta[:q] + z * (w @ beta[q:])
            Z = np.column_stack([np.ones_like(z), z])
            residual = np.where(z == 1, sigma1_sq, sigma0_sq)
        cov = Z @ T @ Z.T + np.diag(residual)
        total += multivariate_normal(mean=mean, cov=cov).logpdf(y)
    return float(total)


class TestMarginalLoglik(unittest.TestCase):
    """Test cases for the collapsed marginal log-likelihood."""

    def test_standard_normal_point(self):
        """Test one record at its mean with unit variance."""
        params = ModelParameters(np.zeros((1, 1)), 1.0, np.zeros(1))

        assert marginal_loglik(params, ONE_SITE, np.ones((1, 1))) == pytest.approx(
            LOG_DENSITY_UNIT, abs=1e-4
        )

    def test_intercept_variance_adds_to_residual(self):
        """Test that omega00 = sigma0^2 = 1 gives the N(0, 2) density at 0."""
        params = ModelParameters(np.ones((1, 1)), 1.0, np.zeros(1))

        assert marginal_loglik(params, ONE_SITE, np.ones((1, 1))) == pytest.approx(
            LOG_DENSITY_VAR_TWO, abs=1e-4
        )

    def test_matches_dense_random_slope_density(self):
        """Test the random-slope likelihood against the dense density."""
        dataset = _toy_dataset()
        design, _ = build_design(dataset.phi_x, dataset.J)
        T = np.array([[9.0, -2.0], [-2.0, 4.0]])
        beta = np.array([50.0, 4.0, 5.0, 2.0])
        params = ModelParameters(T, 4.0, beta, sigma1_sq=6.25)

        collapsed = marginal_loglik(params, summarize_arrays(dataset), design)
        dense = _dense_loglik(dataset, T, 4.0, 6.25, beta, design)

        assert collapsed == pytest.approx(dense, abs=1e-9 * abs(dense))

    def test_matches_dense_random_intercept_density(self):
        """Test the control-only likelihood against the dense density."""
        dataset = _toy_dataset(seed=1)
        design, _ = build_design(dataset.phi_x, dataset.J)
        T = np.array([[7.0]])
        beta = np.array([49.0, 3.5])
        params = ModelParameters(T, 3.0, beta)

        collapsed = marginal_loglik(params, summarize_arrays(dataset), design)
        dense = _dense_loglik(dataset, T, 3.0, None, beta, design)

        assert collapsed == pytest.approx(dense, abs=1e-9 * abs(dense))

    def test_singular_t_is_allowed(self):
        """Test that a rank-one T still gives the dense density."""
        dataset = _toy_dataset(seed=2)
        design, _ = build_design(None, dataset.J)
        T = np.array([[4.0, 6.0], [6.0, 9.0]])
        beta = np.array([50.0, 5.0])
        params = ModelParameters(T, 4.0, beta, sigma1_sq=6.0)

        collapsed = marginal_loglik(params, summarize_arrays(dataset), design)
        dense = _dense_loglik(dataset, T, 4.0, 6.0, beta, design)

        assert collapsed == pytest.approx(dense, abs=1e-9 * abs(dense))

    def test_rejects_indefinite_t(self):
        """Test that a non-PSD covariance is a domain error."""
        params = ModelParameters(
            np.array([[1.0, 2.0], [2.0, 1.0]]), 1.0, np.zeros(2), sigma1_sq=1.0
        )
        stats = summarize_arrays(_toy_dataset())
        with pytest.raises(DomainError):
            marginal_loglik(params, stats, np.ones((6, 1)))

    def test_rejects_non_positive_residual_variance(self):
        """Test that sigma0^2 must be positive."""
        params = ModelParameters(np.zeros((1, 1)), 0.0, np.zeros(1))
        with pytest.raises(DomainError):
            marginal_loglik(params, ONE_SITE, np.ones((1, 1)))


class TestGradient(unittest.TestCase):
    """Test cases for the analytic score of the profiled likelihood."""

    def test_matches_finite_differences(self):
        """Test the chained gradient against central differences at many points."""
        rng = np.random.default_rng(5)
        dataset = _toy_dataset(seed=3, J=8)
        stats = summarize_arrays(dataset)
        design, _ = build_design(dataset.phi_x, dataset.J)
        models = {
            1: MarginalModel.random_intercept(stats, design),
            2: MarginalModel.random_slope(stats, design),
        }

        for point in range(GRADIENT_POINTS):
            k = 1 if point % 4 == 0 else 2
            model = models[k]
            n_params = 2 if k == 1 else 5
            theta = rng.normal(scale=0.7, size=n_params) + np.log(4.0) * (
                np.arange(n_params) != 1
            )

            L, T, s0, s1 = unpack(theta, k)
            evaluation = model.evaluate(T, s0, s1, with_gradient=True)
            analytic = chain_gradient(evaluation, L, s0, s1)

            numeric = np.empty(n_params)
            h = 1e-5
            for i in range(n_params):
                step = np.zeros(n_params)
                step[i] = h
                up = model.evaluate(*unpack(theta + step, k)[1:]).loglik
                down = model.evaluate(*unpack(theta - step, k)[1:]).loglik
                numeric[i] = (up - down) / (2 * h)

            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_pack_inverts_unpack(self):
        """Test that packing the unpacked parameters returns the vector."""
        theta = np.array([0.3, -1.2, 0.8, 1.5, 2.0])
        _, T, s0, s1 = unpack(theta, 2)

        np.testing.assert_allclose(pack(T, s0, s1), theta, rtol=1e-12)


class TestGlsFixedEffects(unittest.TestCase):
    """Test cases for GLS profiling."""

    def test_reduces_to_pooled_ols(self):
        """Test that T = 0 and equal residual variances give individual OLS."""
        dataset = _toy_dataset(seed=4)
        design, _ = build_design(dataset.phi_x, dataset.J)
        beta = gls_fixed_effects(
            np.zeros((2, 2)), 1.0, summarize_arrays(dataset), design, sigma1_sq=1.0
        )

        w = design[dataset.site_idx]
        individual = np.hstack([w, dataset.z[:, np.newaxis] * w])
        ols, *_ = np.linalg.lstsq(individual, dataset.y, rcond=None)

        np.testing.assert_allclose(beta, ols, rtol=1e-8)


class TestEstimationSettings(unittest.TestCase):
    """Test cases for optimizer settings."""

    def test_defaults(self):
        """Test the documented default tolerances."""
        settings = EstimationSettings()

        assert settings.max_iterations == 500
        assert settings.ftol == 1e-10
        assert settings.boundary_tol == 1e-8

    def test_reml_is_a_usage_error(self):
        """Test that REML is rejected rather than silently ignored."""
        with pytest.raises(UsageError):
            EstimationSettings(method="reml")

    def test_unknown_key(self):
        """Test that an unknown config key is a schema error."""
        with pytest.raises(SchemaError):
            EstimationSettings.from_config({"tolerance": 1e-3})

    def test_from_config(self):
        """Test that config values override the defaults."""
        settings = EstimationSettings.from_config({"max_iterations": 50})

        assert settings.max_iterations == 50
        assert settings.gtol == EstimationSettings().gtol


class TestFitRandomIntercept(unittest.TestCase):
    """Test cases for the Step-1 random-intercept fit."""

    def test_two_sites_match_grid_search(self):
        """Test that the ML fit is the maximum of a profiled grid."""
        stats = [
            SiteSufficientStats("a", 5, 5, 0.0, 0.0, 20.0, 20.0),
            SiteSufficientStats("b", 5, 5, 10.0, 10.0, 20.0, 20.0),
        ]
        fit = fit_random_intercept(stats)
        model = MarginalModel.random_intercept(stats, np.ones((2, 1)))

        assert fit.converged
        assert fit.alpha00 == pytest.approx(5.0, abs=1e-8)

        coarse = max(
            model.evaluate(np.array([[omega]]), s0).loglik
            for omega in np.logspace(-3, 4, 60)
            for s0 in np.logspace(-2, 3, 60)
        )
        assert fit.loglik >= coarse - 1e-8

        omegas = fit.omega00 * np.linspace(0.98, 1.02, 101)
        sigmas = fit.sigma0_sq * np.linspace(0.98, 1.02, 101)
        grid = np.array(
            [[model.evaluate(np.array([[o]]), s).loglik for s in sigmas] for o in omegas]
        )
        i, j = np.unravel_index(np.argmax(grid), grid.shape)

        assert omegas[i] == pytest.approx(fit.omega00, rel=1e-3)
        assert sigmas[j] == pytest.approx(fit.sigma0_sq, rel=1e-3)
        assert fit.loglik >= grid.max() - 1e-8

    def test_equal_site_means_hit_the_boundary(self):
        """Test that identical control means drive omega00 to 0."""
        s2, n0 = 4.0, 10
        stats = [
            SiteSufficientStats(f"s{j}", n0, n0, 5.0, 6.0, n0 * s2, n0 * s2)
            for j in range(8)
        ]
        fit = fit_random_intercept(stats)

        assert fit.omega00 < 1e-6 * s2
        assert fit.alpha00 == pytest.approx(5.0, abs=1e-8)
        assert fit.sigma0_sq == pytest.approx(s2, rel=1e-4)

    def test_collinear_covariates_are_named(self):
        """Test that a rank-deficient design names the offending column."""
        stats = summarize_arrays(_toy_dataset())
        phi = np.random.default_rng(0).normal(size=(6, 1))
        collinear = np.hstack([phi, 2 * phi])

        with pytest.raises(RankError) as info:
            fit_random_intercept(stats, collinear, ("w1", "w2"))

        assert info.value.columns == ("w2",)

    def test_constant_covariate_collides_with_intercept(self):
        """Test that a constant site covariate is reported as collinear."""
        stats = summarize_arrays(_toy_dataset())
        with pytest.raises(RankError) as info:
            fit_random_intercept(stats, np.full((6, 1), 3.0), ("flat",))

        assert "flat" in info.value.columns

    def test_single_site_rejected(self):
        """Test that one site cannot identify omega00."""
        with pytest.raises(DomainError):
            fit_random_intercept(ONE_SITE)

    def test_history_is_monotone(self):
        """Test that the log-likelihood never decreases across iterations."""
        dataset = _toy_dataset(seed=6, J=10)
        fit = fit_random_intercept(
            summarize_arrays(dataset), dataset.phi_x, dataset.site_covariate_names
        )
        history = np.array(fit.diagnostics.history)

        assert fit.converged
        assert np.all(np.diff(history) >= -1e-8 * abs(history[-1]))


class TestFitRandomSlope(unittest.TestCase):
    """Test cases for the random intercept and slope fit."""

    def setUp(self):
        self.dataset, _ = generate(
            GeneratorConfig(J=40, n_low=20, n_high=60, psi_std=0.2, seed=11)
        )
        self.stats = summarize_arrays(self.dataset)

    def test_converges_with_psd_covariance(self):
        """Test convergence, a PSD T and a monotone history on generated data."""
        fit = fit_random_slope(
            self.stats, self.dataset.phi_x, covariate_names=("mu_x1", "mu_x2")
        )
        history = np.array(fit.diagnostics.history)

        assert fit.converged
        assert np.linalg.eigvalsh(fit.T).min() >= -1e-10
        assert fit.design_names == ("const", "mu_x1", "mu_x2")
        assert fit.gamma02 is None
        assert np.all(np.diff(history) >= -1e-8 * abs(history[-1]))

    def test_location_shift_moves_only_the_intercept(self):
        """Test that adding a constant to every outcome shifts gamma00 only."""
        shifted = self.dataset.with_outcomes(self.dataset.y + SHIFT)
        base = fit_random_slope(self.stats, self.dataset.phi_x)
        moved = fit_random_slope(summarize_arrays(shifted), shifted.phi_x)

        assert moved.gamma00 == pytest.approx(base.gamma00 + SHIFT, rel=1e-6)
        np.testing.assert_allclose(moved.gamma1, base.gamma1, rtol=1e-4, atol=1e-4)
        np.testing.assert_allclose(moved.T, base.T, rtol=1e-4, atol=1e-3)
        assert moved.sigma1_sq == pytest.approx(base.sigma1_sq, rel=1e-4)

    def test_eta_column_is_last(self):
        """Test that a Step-2 design ends with eta0_star."""
        eta = np.random.default_rng(1).normal(size=self.dataset.J)
        fit = fit_random_slope(self.stats, self.dataset.phi_x, eta0_star=eta)

        assert fit.design_names[-1] == "eta0_star"
        assert fit.has_eta
        assert fit.gamma12 is not None

    def test_too_few_sites(self):
        """Test that a random slope needs at least three sites."""
        with pytest.raises(DomainError):
            fit_random_slope(ONE_SITE * 2)


class TestNumericalSafety(unittest.TestCase):
    """Test cases for points where the likelihood cannot be evaluated."""

    def setUp(self):
        dataset = _toy_dataset(seed=8)
        design, _ = build_design(dataset.phi_x, dataset.J)
        self.model = MarginalModel.random_slope(summarize_arrays(dataset), design)

    def test_variances_are_bounded_above(self):
        """Test that every parameter has a finite upper bound."""
        bounds = np.array(_Cholesky(2).bounds(4.0))

        assert np.all(np.isfinite(bounds))
        assert np.all(bounds[:, 0] < bounds[:, 1])
        assert np.exp(bounds[3, 1]) == pytest.approx(VARIANCE_CEILING * 4.0)

    def test_overflowing_points_score_the_penalty(self):
        """Test that huge residual variances are penalized instead of raised."""
        objective = _Objective(self.model, _Cholesky(2))
        objective.penalty = 1e9

        for log_sigma0_sq in (600.0, 800.0):
            value, grad = objective(np.array([0.0, 0.0, 0.0, log_sigma0_sq, 0.0]))

            assert value == 1e9
            np.testing.assert_array_equal(grad, np.zeros(5))
            assert objective.last_failed
        assert objective.failures == 2

    def test_recovers_after_a_failed_point(self):
        """Test that a good point after a failure is evaluated and kept."""
        objective = _Objective(self.model, _Cholesky(2))
        objective.penalty = 1e9
        objective(np.array([0.0, 0.0, 0.0, 800.0, 0.0]))
        theta = np.array([np.log(2.0), 0.5, np.log(2.0), np.log(4.0), np.log(6.0)])
        value, _ = objective(theta)

        assert np.isfinite(value)
        assert not objective.last_failed
        np.testing.assert_array_equal(objective.best_theta, theta)
        assert objective.best_loglik == pytest.approx(-value * self.model.J)


class TestBoundaryFaces(unittest.TestCase):
    """Test cases for fits whose maximum has a zero variance."""

    def test_face_layout(self):
        """Test which components each face holds at 0."""
        assert _Face(1, None).zeroed == ("omega00",)
        assert _Face(2, 1).zeroed == ("tau00",)
        assert _Face(2, 0).zeroed == ("tau11",)
        assert _Face(2, None).zeroed == ("tau00", "tau11")

        T, s0, s1 = _Face(2, 1).natural(np.log([9.0, 4.0, 6.0]))
        np.testing.assert_allclose(T, [[0.0, 0.0], [0.0, 9.0]])
        assert (s0, s1) == pytest.approx((4.0, 6.0))

    def test_face_gradient_matches_finite_differences(self):
        """Test the face gradient against central differences."""
        dataset = _toy_dataset(seed=7, J=8)
        design, _ = build_design(dataset.phi_x, dataset.J)
        model = MarginalModel.random_slope(summarize_arrays(dataset), design)
        face = _Face(2, 1)
        theta = np.log([3.0, 4.0, 6.0])

        evaluation = model.evaluate(*face.natural(theta), with_gradient=True)
        analytic = face.gradient(evaluation, theta)
        numeric = np.empty(3)
        h = 1e-5
        for i in range(3):
            step = np.zeros(3)
            step[i] = h
            up = model.evaluate(*face.natural(theta + step)).loglik
            down = model.evaluate(*face.natural(theta - step)).loglik
            numeric[i] = (up - down) / (2 * h)

        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_identical_control_means_put_tau00_on_the_boundary(self):
        """Test a converged fit with tau00 = 0 when control means do not vary."""
        stats = [
            SiteSufficientStats(f"s{j}", 20, 20, 5.0, 5.0 + float(d), 76.0, 76.0)
            for j, d in enumerate(np.linspace(-6.0, 6.0, 12))
        ]
        fit = fit_random_slope(stats)
        model = MarginalModel.random_slope(stats, np.ones((12, 1)))
        interior = model.evaluate(
            np.diag([1e-2, fit.tau11]), fit.sigma0_sq, fit.sigma1_sq
        ).loglik
        history = np.array(fit.diagnostics.history)

        assert fit.converged
        assert "tau00" in fit.diagnostics.boundary
        assert fit.tau00 == 0.0
        assert fit.tau01 == 0.0
        assert fit.tau11 > 0
        assert fit.loglik >= interior
        assert np.all(np.diff(history) >= -1e-8 * abs(history[-1]))


@pytest.mark.slow
class TestLargeSampleRecovery(unittest.TestCase):
    """Test cases for recovery of generating values in large trials."""

    def test_step_one_recovers_site_mean_coefficients(self):
        """Test that alpha01 estimates the total coefficients on mu_x."""
        model = SCENARIO_MODELS[1].without_unobserved()
        dataset, _ = generate(
            GeneratorConfig(J=1000, n_low=400, n_high=1000, seed=31), model=model
        )
        fit = fit_random_intercept(
            summarize_arrays(dataset), dataset.phi_x, dataset.site_covariate_names
        )
        expected = np.array(model.y0_x) + np.array(model.y0_mu_x)

        assert fit.converged
        np.testing.assert_allclose(fit.alpha01, expected, atol=3.0)

    def test_conditional_slope_variance_identity(self):
        """Test that Step 2 recovers the conditional moments of the joint fit."""
        dataset, _ = generate(
            GeneratorConfig(J=1000, n_low=300, n_high=1700, psi_std=0.2, seed=37)
        )
        stats = summarize_arrays(dataset)
        phi = dataset.phi_x

        joint = fit_random_slope(stats, phi)
        step_one = fit_random_intercept(stats, phi)
        residual = stats.ybar0 - step_one.fitted_means(phi)
        reliability = step_one.omega00 / (step_one.omega00 + step_one.sigma0_sq / stats.n0)
        step_two = fit_random_slope(stats, phi, eta0_star=reliability * residual)

        omega = joint.T
        regression = omega[0, 1] / omega[0, 0]
        conditional = omega[1, 1] - omega[0, 1] ** 2 / omega[0, 0]

        assert step_two.gamma12 == pytest.approx(regression, rel=0.05)
        assert step_two.tau11 == pytest.approx(conditional, rel=0.05)

    def test_control_mean_effects_vanish_when_explained(self):
        """Test that tau00 and tau01 are near 0 when mu_x explains control means."""
        model = SCENARIO_MODELS[1].without_unobserved()
        dataset, _ = generate(
            GeneratorConfig(J=1000, n_low=300, n_high=1700, psi_std=0.2, seed=41),
            model=model,
        )
        fit = fit_random_slope(summarize_arrays(dataset), dataset.phi_x)

        assert fit.converged
        assert fit.tau00 < 0.05 * fit.tau11
        assert abs(fit.tau01) < 0.05 * fit.tau11

    def test_no_lre_spread_gives_small_tau11(self):
        """Test that tau11 is below 0.01 sigma^2 when psi = 0 and X is adjusted."""
        model = SCENARIO_MODELS[1].without_unobserved()
        dataset, _ = generate(
            GeneratorConfig(J=1000, n_low=300, n_high=1700, psi_std=0.0, seed=43),
            model=model,
        )
        fit = fit_random_slope(summarize_arrays(dataset), dataset.phi_x)

        assert fit.tau11 < 0.01 * model.sigma**2
