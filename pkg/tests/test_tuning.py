"""
Double-Bootstrap Tuning Tests

Tests residual projection, the double bootstrap, lambda selection
and the confirmatory pattern classifier
"""

import numpy as np
import pandas as pd
import pytest

from src.api.models import AbConfig, BootstrapConfig
from src.exceptions import GridExhausted, InputError
from src.models import tuning
from src.models.poc_ab import adaptive_poc_test
from src.models.regression import fit_ols, fwl_project
from src.models.resampling import derive_substream, draw_child_seed, draw_pair_indices
from src.models.tuning import (
    ALPHA_ZERO,
    ALTERNATIVE,
    BETA_ZERO,
    BOTH_ZERO,
    DEGENERATE_TAG,
    INCONCLUSIVE,
    NON_DEGENERATE_TAG,
    PValueSample,
    TuningCriteria,
    classify_pattern,
    confirmatory_analysis,
    double_bootstrap,
    residual_project,
    select_lambda,
)

CONSERVATIVE = PValueSample(pvalues=np.linspace(0.3, 1.0, 100), lam=0.0, method="poc")
UNIFORM = PValueSample(pvalues=(np.arange(1, 201) - 0.5) / 200, lam=0.0, method="poc")
UPWARD = PValueSample(
    pvalues=np.concatenate([np.full(60, 0.001), np.linspace(0.01, 1.0, 40)]), lam=0.0, method="poc"
)


@pytest.mark.model
class TestResidualProject:
    """Test the zero-forcing projections"""

    def test_self_projection(self, simulate):
        dataset = simulate(n=100, alpha_s=0.5, beta_m=0.5, seed=41)
        projected, _ = fwl_project(dataset.exposure, dataset.exposure)
        np.testing.assert_allclose(projected, 0.0, atol=1e-12)

    def test_alpha_mode(self, simulate):
        dataset = simulate(n=100, alpha_s=0.5, beta_m=0.5, seed=41)
        processed = residual_project(dataset, "alpha")

        assert processed.mode == "alpha"
        assert abs(fit_ols(processed.data, "mediator").focal_coefficients[0]) <= 1e-10
        assert np.max(np.abs(dataset.exposure @ processed.data.mediators)) <= 1e-10 * dataset.n
        np.testing.assert_array_equal(processed.data.exposure, dataset.exposure)

    def test_beta_mode(self, simulate):
        dataset = simulate(n=100, alpha_s=0.5, beta_m=0.5, seed=41)
        processed = residual_project(dataset, "beta")

        assert abs(fit_ols(processed.data, "outcome").focal_coefficients[0]) <= 1e-10
        np.testing.assert_array_equal(processed.data.mediators, dataset.mediators)
        np.testing.assert_array_equal(processed.data.exposure, dataset.exposure)
        assert processed.data.outcome_exposure is not None

    def test_beta_mode_keeps_alpha(self, simulate):
        """Only the outcome model is projected; the mediator model is untouched"""
        dataset = simulate(n=100, alpha_s=0.5, beta_m=0.5, seed=41)
        processed = residual_project(dataset, "beta")

        original = fit_ols(dataset, "mediator").focal_coefficients[0]
        assert fit_ols(processed.data, "mediator").focal_coefficients[0] == pytest.approx(original, abs=1e-10)
        assert abs(original) > 0.2

    def test_both_mode(self, simulate):
        dataset = simulate(n=100, alpha_s=0.5, beta_m=0.5, seed=41)
        data = residual_project(dataset, "both").data

        assert abs(fit_ols(data, "mediator").focal_coefficients[0]) <= 1e-10
        assert abs(fit_ols(data, "outcome").focal_coefficients[0]) <= 1e-10

    def test_idempotent(self, simulate):
        dataset = simulate(n=100, alpha_s=0.5, beta_m=0.5, seed=41)
        once = residual_project(dataset, "alpha")
        twice = residual_project(once, "alpha")
        np.testing.assert_allclose(twice.data.mediators, once.data.mediators, atol=1e-10)
        np.testing.assert_allclose(twice.data.covariates, once.data.covariates, atol=1e-10)

    def test_unknown_mode(self, simulate):
        with pytest.raises(InputError):
            residual_project(simulate(n=50), "gamma")


@pytest.mark.unit
class TestPValueSample:
    """Test the sample shape summaries"""

    def test_shapes(self):
        criteria = TuningCriteria()
        assert CONSERVATIVE.is_conservative(criteria)
        assert not UNIFORM.is_conservative(criteria)
        assert UNIFORM.is_uniform(criteria)
        assert UPWARD.bends_upward(criteria)
        assert not UNIFORM.bends_upward(criteria)

    def test_summary_and_frame(self):
        summary = UNIFORM.summary(TuningCriteria())
        assert summary["size"] == 200
        assert summary["fraction_below"] == pytest.approx(0.05)
        assert summary["uniform"] == 1.0

        frame = UNIFORM.to_frame()
        assert isinstance(frame, pd.DataFrame)
        assert list(frame.columns) == ["replicate", "p_value"]

    def test_criteria_from_config(self):
        criteria = TuningCriteria.from_config({"ks_level": 0.05, "default_lambda": 3, "grid": [0, 1]})
        assert criteria.ks_level == 0.05
        assert criteria.default_lambda == 3.0
        assert criteria.conservative_omega == 0.05


@pytest.mark.unit
class TestClassifyPattern:
    """Test the evidence labels"""

    def test_all_conservative(self):
        assert classify_pattern(CONSERVATIVE, CONSERVATIVE, CONSERVATIVE) == BOTH_ZERO

    def test_alternative(self):
        assert classify_pattern(UPWARD, UNIFORM, UNIFORM) == ALTERNATIVE

    def test_alpha_zero(self):
        assert classify_pattern(UNIFORM, UNIFORM, CONSERVATIVE) == ALPHA_ZERO

    def test_beta_zero(self):
        assert classify_pattern(UNIFORM, CONSERVATIVE, UNIFORM) == BETA_ZERO

    def test_inconclusive(self):
        assert classify_pattern(CONSERVATIVE, UNIFORM, CONSERVATIVE) == INCONCLUSIVE

    def test_single_zero_needs_uniform_partner(self):
        """A non-conservative but non-uniform processed sample gives no single-zero label"""
        assert classify_pattern(UNIFORM, UPWARD, CONSERVATIVE) == INCONCLUSIVE
        assert classify_pattern(UNIFORM, CONSERVATIVE, UPWARD) == INCONCLUSIVE


@pytest.mark.model
class TestDoubleBootstrap:
    """Test the two-layer bootstrap"""

    def test_single_outer_replicate(self, simulate):
        """b_outer=1 is one adaptive test on one resample"""
        dataset = simulate(n=80, alpha_s=0.3, seed=42)
        sample = double_bootstrap(dataset, lam=2.0, b_outer=1, b_inner=49, seed=99)

        rng = derive_substream(99, 0)
        indices = draw_pair_indices(dataset.n, rng)
        inner_seed = draw_child_seed(rng)
        config = AbConfig(lam=2.0, bootstrap=BootstrapConfig(b=49, seed=inner_seed, workers=1))
        expected = adaptive_poc_test(dataset.take(indices), config).p_value

        assert sample.size == 1
        assert sample.pvalues[0] == expected
        assert sample.missing == 0

    def test_worker_count_does_not_matter(self, simulate):
        dataset = simulate(n=80, seed=42)
        serial = double_bootstrap(dataset, 0.0, b_outer=8, b_inner=19, seed=5, workers=1)
        threaded = double_bootstrap(dataset, 0.0, b_outer=8, b_inner=19, seed=5, workers=3)
        np.testing.assert_array_equal(serial.pvalues, threaded.pvalues)

    def test_js_method(self, simulate):
        sample = double_bootstrap(simulate(n=80, seed=42), 2.0, b_outer=3, b_inner=19, seed=5, method="js")
        assert sample.method == "js"
        assert sample.size == 3

    def test_invalid_arguments(self, simulate):
        dataset = simulate(n=50)
        with pytest.raises(InputError):
            double_bootstrap(dataset, 0.0, b_outer=0)
        with pytest.raises(InputError):
            double_bootstrap(dataset, 0.0, b_outer=2, b_inner=9, method="sobel")


def _fake_double_bootstrap(shapes):
    """Stand-in keyed by processing mode (or lambda on the doubly-processed data)"""
    def fake(data, lam, b_outer, b_inner, seed, method, config, workers):
        key = data.mode if data.mode != "both" else f"both@{lam:g}"
        pvalues = shapes[key].pvalues
        return PValueSample(pvalues=pvalues, lam=float(lam), method=method)
    return fake


@pytest.mark.unit
class TestSelectLambda:
    """Test the selection logic with fixed p-value shapes"""

    def test_non_degenerate_returns_default(self, simulate, monkeypatch):
        monkeypatch.setattr(tuning, "double_bootstrap", _fake_double_bootstrap(
            {"alpha": CONSERVATIVE, "beta": UNIFORM}
        ))
        selection = select_lambda(simulate(n=60), grid=[0, 1, 2], b_outer=5, b_inner=5)
        assert selection.lam == 2.0
        assert selection.tag == NON_DEGENERATE_TAG
        assert set(selection.samples) == {"alpha", "beta"}

    def test_degenerate_scans_grid(self, simulate, monkeypatch):
        monkeypatch.setattr(tuning, "double_bootstrap", _fake_double_bootstrap({
            "alpha": CONSERVATIVE, "beta": CONSERVATIVE,
            "both@0": CONSERVATIVE, "both@1": CONSERVATIVE, "both@2": UNIFORM, "both@3": UNIFORM,
        }))
        selection = select_lambda(simulate(n=60), grid=[0, 1, 2, 3], b_outer=5, b_inner=5)
        assert selection.lam == 2.0
        assert selection.tag == DEGENERATE_TAG
        assert "both@3" not in selection.samples
        assert len(selection.diagnostics) == 5

    def test_grid_exhausted(self, simulate, monkeypatch):
        monkeypatch.setattr(tuning, "double_bootstrap", _fake_double_bootstrap({
            "alpha": CONSERVATIVE, "beta": CONSERVATIVE, "both@0": CONSERVATIVE, "both@1": CONSERVATIVE,
        }))
        with pytest.raises(GridExhausted):
            select_lambda(simulate(n=60), grid=[0, 1], b_outer=5, b_inner=5)

    @pytest.mark.parametrize("grid", [[], [2, 1], [-1, 0]])
    def test_invalid_grid(self, simulate, grid):
        with pytest.raises(InputError):
            select_lambda(simulate(n=60), grid=grid, b_outer=2, b_inner=9)


@pytest.mark.slow
class TestDoubleBootstrapShapes:
    """Monte-Carlo shapes of the processed-data p-values"""

    def test_doubly_processed_conservative_at_zero(self, simulate):
        dataset = simulate(n=200, alpha_s=0.5, beta_m=0.5, seed=43)
        sample = double_bootstrap(residual_project(dataset, "both"), 0.0, b_outer=100, b_inner=99, seed=1)
        assert sample.is_conservative(TuningCriteria())

    def test_confirmatory_on_processed_data(self, simulate):
        dataset = simulate(n=200, alpha_s=0.5, beta_m=0.5, seed=44)
        processed = residual_project(dataset, "both")
        outcome = confirmatory_analysis(processed, lam=0.0, b_outer=100, b_inner=99, seed=2)
        assert outcome.label == BOTH_ZERO
        assert set(outcome.samples) == {"obs", "alpha", "beta"}

    def test_threshold_restores_uniformity(self, simulate):
        """On doubly-processed H03 data lambda=0 is conservative and lambda=4 is uniform"""
        both = residual_project(simulate(n=200, seed=45), "both")
        criteria = TuningCriteria()

        classical = double_bootstrap(both, 0.0, b_outer=200, b_inner=299, seed=3)
        assert classical.is_conservative(criteria)
        assert not classical.is_uniform(criteria)

        adaptive = double_bootstrap(both, 4.0, b_outer=200, b_inner=299, seed=3)
        assert adaptive.is_uniform(criteria)

    def test_select_lambda_scans_grid(self, simulate):
        selection = select_lambda(simulate(n=200, seed=46), grid=[0, 4, 8], b_outer=100, b_inner=199, seed=5)

        assert selection.tag == DEGENERATE_TAG
        assert "both@0" in selection.samples
        assert selection.lam > 0

    def test_confirmatory_alternative(self, simulate):
        dataset = simulate(n=200, alpha_s=1.0, beta_m=1.0, seed=47)
        outcome = confirmatory_analysis(dataset, lam=0.0, b_outer=100, b_inner=99, seed=6)
        assert outcome.label == ALTERNATIVE

    def test_confirmatory_alpha_zero(self, simulate):
        """alpha_hat is exactly zero after alpha processing while beta stays large"""
        dataset = residual_project(simulate(n=200, alpha_s=0.0, beta_m=1.0, seed=48), "alpha").data
        outcome = confirmatory_analysis(dataset, lam=0.0, b_outer=100, b_inner=99, seed=7)
        assert outcome.label == ALPHA_ZERO
