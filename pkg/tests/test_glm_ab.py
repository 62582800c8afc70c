"""
Generalized Linear Mediation Test Suite

Tests the NIE plug-in formulas, their gradients and the adaptive
bootstrap for the two logistic scenarios
"""

import math

import numpy as np
import pytest

from src.api.models import AbConfig, BootstrapConfig, NieQuery
from src.exceptions import InputError, ProbabilityBoundary
from src.models.glm_ab import (
    adaptive_glm_test,
    classical_glm_test,
    glm_components,
    mediator_contrast,
    nie_estimate,
    nie_linear_outcome,
    nie_log_or,
    nie_risk_difference,
    outcome_contrast,
    query_row,
)
from src.models.regression import fit_ols
from src.models.resampling import ks_uniform_test


def _g(value):
    return 1.0 / (1.0 + math.exp(-value))


def _numeric_gradient(func, point, step=1e-6):
    point = np.asarray(point, dtype=float)
    gradient = np.zeros_like(point)
    for k in range(point.size):
        up, down = point.copy(), point.copy()
        up[k] += step
        down[k] -= step
        gradient[k] = (func(up) - func(down)) / (2 * step)
    return gradient


@pytest.mark.unit
class TestNieFormulas:
    """Test the log odds-ratio and risk-difference NIE"""

    def test_risk_difference_hand_value(self):
        """beta_M=1, alpha_S=ln 3, zero intercept: g(ln 3) - g(0) = 0.25"""
        value = nie_risk_difference(np.array([math.log(3.0), 0.0]), 1.0, np.array([1.0]), 1.0, 0.0)
        assert value == pytest.approx(0.25, abs=1e-12)

    def test_risk_difference_zero_coefficients(self):
        x = np.array([1.0, 0.5])
        assert nie_risk_difference(np.array([0.0, -1.0, 1.0]), 2.0, x, 1.0, 0.0) == 0.0
        assert nie_risk_difference(np.array([0.7, -1.0, 1.0]), 0.0, x, 1.0, 0.0) == 0.0

    def test_log_or_sign(self):
        """The log odds-ratio NIE has the sign of alpha_S beta_M (s - s*)"""
        rng = np.random.default_rng(2024)
        for _ in range(200):
            alpha_s = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 2.0)
            beta_m = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 2.0)
            alpha = np.array([alpha_s, rng.uniform(-1.0, 1.0)])
            beta = np.array([beta_m, rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)])
            s = rng.uniform(-1.0, 1.0)
            s_star = s + rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 1.0)

            value = nie_log_or(alpha, beta, np.array([1.0]), s, s_star)
            assert np.sign(value) == np.sign(alpha_s * beta_m * (s - s_star))

    def test_log_or_zero_coefficients(self):
        x = np.array([1.0, 1.0])
        beta = np.array([0.8, -1.0, 1.0, 1.0])
        assert nie_log_or(np.array([0.0, -1.0, 1.0]), beta, x, 1.0, 0.0) == 0.0
        beta_zero = np.array([0.0, -1.0, 1.0, 1.0])
        assert nie_log_or(np.array([0.9, -1.0, 1.0]), beta_zero, x, 1.0, 0.0) == 0.0

    def test_log_or_direct_evaluation(self):
        alpha = np.array([math.log(3.0), 0.0])
        beta = np.array([1.0, -0.5, 0.5])
        x = np.array([1.0])

        base = _g(-0.5 + 0.5)
        jump = _g(1.0 - 0.5 + 0.5) - base
        p_s = _g(math.log(3.0)) * jump + base
        p_star = _g(0.0) * jump + base
        expected = math.log(p_s / (1 - p_s)) - math.log(p_star / (1 - p_star))
        assert nie_log_or(alpha, beta, x, 1.0, 0.0) == pytest.approx(expected, rel=1e-12)

    def test_log_or_boundary(self):
        alpha = np.array([0.5, 0.0])
        beta = np.array([0.0, 50.0, 0.0])
        with pytest.raises(ProbabilityBoundary):
            nie_log_or(alpha, beta, np.array([1.0]), 1.0, 0.0)

    def test_contrast_gradients(self):
        """W_alpha and W_beta match central differences"""
        x = np.array([1.0, 0.3])
        alpha = np.array([0.4, -0.6, 0.8])
        beta = np.array([0.7, -0.2, 0.5, 0.9])

        _, w_alpha = mediator_contrast(alpha, x, 1.0, 0.0)
        numeric = _numeric_gradient(lambda a: mediator_contrast(a, x, 1.0, 0.0)[0], alpha)
        np.testing.assert_allclose(w_alpha, numeric, atol=1e-8)

        _, _, w_beta = outcome_contrast(beta, x, 1.0)
        numeric = _numeric_gradient(lambda b: outcome_contrast(b, x, 1.0)[0], beta)
        np.testing.assert_allclose(w_beta, numeric, atol=1e-8)

    def test_query_row(self):
        np.testing.assert_array_equal(query_row(NieQuery(), 3), [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(query_row(NieQuery(x=[1.0, 1.0]), 2), [1.0, 1.0])
        with pytest.raises(InputError):
            query_row(NieQuery(x=[1.0]), 2)


@pytest.mark.model
class TestGlmComponents:
    """Test the fitted components of both scenarios"""

    def test_scenario_two_uses_ols_beta(self, simulate):
        dataset = simulate("glm2", n=400, alpha_s=0.5, beta_m=0.5, seed=31)
        components = glm_components(dataset, "II")

        assert components.d_beta == pytest.approx(fit_ols(dataset, "outcome").coefficients[0])
        assert components.gamma_hat is None
        assert nie_estimate(components) == pytest.approx(components.d_beta * components.d_alpha)

    def test_scenario_one_gamma(self, simulate):
        dataset = simulate("glm1", n=400, alpha_s=0.5, beta_m=0.5, seed=32)
        components = glm_components(dataset, "glm1")
        assert components.gamma_hat == pytest.approx(1 / (components.p_star * (1 - components.p_star)))
        assert components.gamma_hat >= 4.0

    def test_query_override(self, simulate):
        dataset = simulate("glm2", n=400, alpha_s=0.5, beta_m=0.5, seed=31)
        components = glm_components(dataset, "II")
        at_x = nie_linear_outcome(components, NieQuery(x=[1.0, 1.0]))
        assert at_x != pytest.approx(nie_linear_outcome(components))

    def test_unknown_scenario(self, simulate):
        with pytest.raises(InputError):
            glm_components(simulate("glm2", n=100), "III")


@pytest.mark.model
class TestAdaptiveGlmTest:
    """Test the adaptive NIE bootstrap"""

    @pytest.mark.parametrize("scenario, tag", [("glm1", "glm1-b"), ("glm2", "glm2-b")])
    def test_zero_lambda_equals_classical(self, simulate, scenario, tag):
        dataset = simulate(scenario, n=300, alpha_s=0.5, beta_m=0.5, seed=33)
        config = AbConfig(bootstrap=BootstrapConfig(b=49, seed=5))
        adaptive, dist_a = adaptive_glm_test(dataset, scenario, config=config.model_copy(update={"lam": 0.0}),
                                             return_distribution=True)
        classical, dist_c = classical_glm_test(dataset, scenario, config=config, return_distribution=True)

        assert adaptive.p_value == classical.p_value
        np.testing.assert_array_equal(dist_a.samples, dist_c.samples)
        assert classical.method == tag
        assert adaptive.indicator_rate == 0.0

    def test_strong_signal_scenario_two(self, simulate):
        dataset = simulate("glm2", n=500, alpha_s=1.0, beta_m=1.0, seed=34)
        config = AbConfig(lam_alpha=1.9, lam_beta=3.3, bootstrap=BootstrapConfig(b=99, seed=6))
        result = adaptive_glm_test(dataset, "II", config=config)

        assert result.method == "glm2-ab"
        assert result.p_value <= 0.05
        assert result.estimate > 0

    def test_doubly_null_local_branch(self, simulate):
        dataset = simulate("glm2", n=400, seed=35)
        config = AbConfig(bootstrap=BootstrapConfig(b=49, seed=7))
        result = adaptive_glm_test(dataset, "II", config=config)
        assert result.indicator_rate > 0.5
        assert 0 < result.p_value <= 1

    def test_projected_scheme_rejected(self, simulate):
        dataset = simulate("glm2", n=100, seed=35)
        config = AbConfig(bootstrap=BootstrapConfig(b=9, scheme="projected"))
        with pytest.raises(InputError):
            adaptive_glm_test(dataset, "II", config=config)


@pytest.mark.slow
class TestGlmCalibration:
    """Monte-Carlo checks for scenario II"""

    def test_null_uniform_and_power(self, simulate):
        null_pvalues, ab_rejections, b_rejections = [], [], []
        for rep in range(300):
            config = AbConfig(lam_alpha=1.9, lam_beta=3.3,
                              bootstrap=BootstrapConfig(b=199, seed=rep, workers=1))
            null_data = simulate("glm2", n=500, seed=40_000 + rep)
            null_pvalues.append(adaptive_glm_test(null_data, "II", config=config).p_value)

            alt_data = simulate("glm2", n=500, alpha_s=0.5, beta_m=0.5, seed=50_000 + rep)
            ab_rejections.append(adaptive_glm_test(alt_data, "II", config=config).p_value < 0.05)
            b_rejections.append(classical_glm_test(alt_data, "II", config=config).p_value < 0.05)

        assert ks_uniform_test(null_pvalues).pvalue >= 0.01
        assert np.mean(ab_rejections) >= np.mean(b_rejections)
