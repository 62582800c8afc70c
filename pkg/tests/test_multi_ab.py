"""
Multivariate Mediation Test Suite

Tests the joint alpha^T beta test, its reduction to the single-mediator
test and the individual-within-multi construction
"""

import numpy as np
import pytest

from src.api.models import AbConfig, BootstrapConfig, SimSpec
from src.data_processing.dataset import Dataset
from src.exceptions import InputError, SingularDesign
from src.models.multi_ab import (
    adaptive_joint_test,
    classical_joint_test,
    individual_within_multi_test,
    joint_components,
    single_mediator_test,
)
from src.models.poc_ab import adaptive_poc_test, poc_components
from src.models.regression import fit_ols
from src.models.resampling import derive_substream, ks_uniform_test
from src.simulation.generators import case_vectors, generate


@pytest.mark.model
class TestJointComponents:
    """Test the vector estimates"""

    def test_single_mediator_reduction(self, simulate):
        dataset = simulate(n=150, alpha_s=0.3, beta_m=0.2, seed=9)
        joint = joint_components(dataset)
        poc = poc_components(dataset)

        assert joint.alpha_vec[0] == pytest.approx(poc.alpha_hat, abs=1e-12)
        assert joint.beta_vec[0] == pytest.approx(poc.beta_hat, abs=1e-12)
        assert joint.sigma_alpha_vec[0] == pytest.approx(poc.sigma_alpha, abs=1e-12)
        assert joint.sigma_beta_vec[0] == pytest.approx(poc.sigma_beta, abs=1e-12)
        assert joint.t_alpha_vec[0] == pytest.approx(poc.t_alpha, abs=1e-12)
        assert joint.t_beta_vec[0] == pytest.approx(poc.t_beta, abs=1e-12)
        assert joint.estimate == pytest.approx(poc.estimate, abs=1e-12)

    def test_duplicate_mediators(self, simulate):
        base = simulate(n=80, seed=9)
        m = base.mediator(0)
        dataset = Dataset.from_arrays(base.exposure, np.column_stack([m, m]), base.outcome)
        with pytest.raises(SingularDesign):
            joint_components(dataset)

    def test_two_mediator_oracle(self, simulate, oracle):
        data = simulate("multi", n=60, n_mediators=2, alpha_s=[0.5, -0.2], beta_m=[0.3, 0.4], seed=12)
        components = joint_components(data)

        for j in range(2):
            coef, _ = oracle(np.column_stack([data.exposure, data.covariates]), data.mediator(j))
            assert components.alpha_vec[j] == pytest.approx(coef[0], abs=1e-9)
        coef_y, _ = oracle(np.column_stack([data.mediators, data.covariates, data.exposure]), data.outcome)
        np.testing.assert_allclose(components.beta_vec, coef_y[:2], atol=1e-9)
        assert components.estimate == pytest.approx(components.alpha_vec @ coef_y[:2], abs=1e-9)


@pytest.mark.model
class TestAdaptiveJointTest:
    """Test the joint adaptive bootstrap"""

    def test_single_mediator_matches_poc(self, simulate, small_config):
        dataset = simulate(n=150, alpha_s=0.2, seed=10)
        joint = adaptive_joint_test(dataset, small_config)
        single = adaptive_poc_test(dataset, small_config)

        assert joint.p_value == pytest.approx(single.p_value, abs=1e-12)
        assert joint.estimate == pytest.approx(single.estimate, abs=1e-12)
        assert joint.method == "joint-ab"

    def test_zero_lambda_equals_classical(self, simulate, small_config):
        dataset = simulate("multi", n=100, n_mediators=3, seed=13)
        adaptive = adaptive_joint_test(dataset, small_config.model_copy(update={"lam": 0.0}))
        classical = classical_joint_test(dataset, small_config)
        assert adaptive.p_value == classical.p_value
        assert classical.method == "joint-b"

    def test_vector_local_parameters(self, simulate, small_config):
        dataset = simulate("multi", n=100, n_mediators=3, seed=13)
        config = small_config.model_copy(update={"b_alpha": [0.0, 0.1, 0.0], "b_beta": 0.0})
        result = adaptive_joint_test(dataset, config)
        assert 0 < result.p_value <= 1

        bad = small_config.model_copy(update={"b_alpha": [0.0, 0.1]})
        with pytest.raises(InputError):
            adaptive_joint_test(dataset, bad)

    def test_mediator_order_does_not_matter(self, simulate, small_config):
        """Relabelling the mediators leaves the joint p-value unchanged under a fixed seed"""
        dataset = simulate("multi", n=120, n_mediators=4, alpha_s=[0.3, 0.0, 0.2, 0.0],
                           beta_m=[0.3, 0.2, 0.0, 0.0], seed=16)
        permuted = dataset.select_mediators([2, 0, 3, 1])
        original = adaptive_joint_test(dataset, small_config)
        reordered = adaptive_joint_test(permuted, small_config)

        assert reordered.p_value == original.p_value
        assert reordered.estimate == pytest.approx(original.estimate, abs=1e-12)
        assert reordered.indicator_rate == original.indicator_rate
        assert reordered.diagnostics["beta_M3"] == pytest.approx(original.diagnostics["beta_M3"], abs=1e-12)

    def test_direct_effect_matches_outcome_fit(self, simulate, small_config):
        dataset = simulate("multi", n=120, n_mediators=4, alpha_s=0.2, beta_m=0.2, seed=16, tau_s=0.5)
        result = adaptive_joint_test(dataset, small_config)
        expected = fit_ols(dataset, "outcome").coefficient(dataset.exposure_name)
        assert result.diagnostics["direct_effect"] == pytest.approx(expected, abs=1e-10)

    def test_projected_scheme(self, simulate, small_config):
        dataset = simulate("multi", n=100, n_mediators=3, alpha_s=1.0, beta_m=1.0, seed=13)
        result = adaptive_joint_test(dataset, small_config.with_bootstrap(scheme="projected"))
        assert result.p_value < 0.05


@pytest.mark.unit
class TestCaseVectors:
    """Test the multivariate null presets"""

    def test_case_one_products_zero(self):
        alpha, beta = case_vectors(1, 6)
        np.testing.assert_array_equal(alpha * beta, np.zeros(6))

    def test_case_six_cancels(self):
        alpha, beta = case_vectors(6, 6)
        np.testing.assert_array_equal(alpha, np.ones(6))
        assert alpha @ beta == 0.0
        assert np.all(alpha * beta != 0)


@pytest.mark.model
class TestIndividualWithinMulti:
    """Test one mediator with the others adjusted for"""

    def test_matches_poc_on_derived_data(self, simulate, small_config):
        dataset = simulate("multi", n=120, n_mediators=2, alpha_s=[0.4, 0.0], beta_m=[0.4, 0.0], seed=14)
        result = individual_within_multi_test(dataset, 0, small_config)
        expected = adaptive_poc_test(dataset.with_mediators_as_covariates(0), small_config)

        assert result.p_value == expected.p_value
        assert result.estimate == expected.estimate
        assert result.target == "M1"

    def test_target_by_name(self, simulate, small_config):
        dataset = simulate("multi", n=120, n_mediators=2, seed=14)
        by_name = individual_within_multi_test(dataset, "M2", small_config, method="poc-sobel")
        by_index = individual_within_multi_test(dataset, 1, small_config, method="poc-sobel")
        assert by_name.p_value == by_index.p_value

    def test_target_out_of_range(self, simulate):
        dataset = simulate("multi", n=60, n_mediators=2, seed=14)
        with pytest.raises(InputError):
            individual_within_multi_test(dataset, 5)
        with pytest.raises(InputError):
            individual_within_multi_test(dataset, "M9")

    def test_active_path_detected(self, simulate):
        dataset = simulate("multi", n=200, n_mediators=3, alpha_s=[1.0, 0.0, 0.0],
                           beta_m=[1.0, 0.0, 0.0], seed=15)
        config = AbConfig(bootstrap=BootstrapConfig(b=199, seed=2))
        assert individual_within_multi_test(dataset, 0, config).p_value < 0.05

    def test_unknown_method(self, simulate):
        with pytest.raises(InputError):
            single_mediator_test(simulate(n=60), "joint-ab")


@pytest.mark.slow
class TestJointCalibration:
    """Monte-Carlo checks of the multivariate nulls"""

    @pytest.mark.parametrize("case", [1, 6])
    def test_null_cases_uniform(self, case):
        spec = SimSpec(scenario="multi", n=200, n_mediators=4, case=case)
        pvalues = []
        for rep in range(300):
            dataset = generate(spec, derive_substream(30_000 + rep, 0))
            config = AbConfig(bootstrap=BootstrapConfig(b=199, seed=rep, workers=1))
            pvalues.append(adaptive_joint_test(dataset, config).p_value)
        assert ks_uniform_test(pvalues).pvalue >= 0.01
