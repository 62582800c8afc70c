"""
Multivariate Mediation Tests
Joint effect alpha_S^T beta_M over J mediators, and the individual effect
of one mediator with the others adjusted for
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg

from src.api.models import SINGLE_MEDIATOR_METHODS, AbConfig, TestResult
from src.data_processing.dataset import Dataset
from src.exceptions import DegenerateResponse, InputError
from src.models.adaptive import ReplicateDraw, summarize, thresholds, vector_local
from src.models.js_ab import adaptive_js_test, classical_js_test, js_components, maxp_test
from src.models.poc_ab import adaptive_poc_test, classical_poc_test, poc_components, sobel_test
from src.models.regression import DEGENERATE_MOMENT_TOL, ProjectionSet, fit_ols, projection_set
from src.models.resampling import draw_pair_indices, run_replicates

logger = logging.getLogger(__name__)


def _solve_moment(v_moment: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if v_moment.shape == (1, 1):
        return rhs / v_moment[0, 0]
    return scipy.linalg.solve(v_moment, rhs, assume_a="pos")


@dataclass(frozen=True, eq=False)
class JointComponents:
    """
    alpha_vec from J mediator regressions, beta_vec from the joint outcome regression
    """
    alpha_vec: np.ndarray
    beta_vec: np.ndarray
    sigma_alpha_vec: np.ndarray
    sigma_beta_vec: np.ndarray
    t_alpha_vec: np.ndarray
    t_beta_vec: np.ndarray
    resid_m: np.ndarray
    resid_y: np.ndarray
    projections: ProjectionSet
    n: int

    @property
    def n_mediators(self) -> int:
        return self.alpha_vec.shape[0]

    @property
    def estimate(self) -> float:
        return float(self.alpha_vec @ self.beta_vec)


def joint_components(dataset: Dataset) -> JointComponents:
    alpha_fits = [fit_ols(dataset, "mediator", j) for j in range(dataset.n_mediators)]
    beta_fit = fit_ols(dataset, "outcome")

    return JointComponents(
        alpha_vec=np.array([f.focal_coefficients[0] for f in alpha_fits]),
        beta_vec=beta_fit.focal_coefficients.copy(),
        sigma_alpha_vec=np.array([f.sigma_hat[0] for f in alpha_fits]),
        sigma_beta_vec=beta_fit.sigma_hat.copy(),
        t_alpha_vec=np.array([f.t_stats()[0] for f in alpha_fits]),
        t_beta_vec=beta_fit.t_stats(),
        resid_m=np.column_stack([f.residuals for f in alpha_fits]),
        resid_y=beta_fit.residuals,
        projections=projection_set(dataset),
        n=dataset.n,
    )


def _pairs_joint_stats(dataset: Dataset, indices: np.ndarray, components: JointComponents):
    resample = dataset.take(indices)
    n = components.n
    root_n = np.sqrt(n)
    alpha_fits = [fit_ols(resample, "mediator", j) for j in range(dataset.n_mediators)]
    beta_fit = fit_ols(resample, "outcome")

    s_star = alpha_fits[0].projected[:, 0]
    v_s = alpha_fits[0].v_moment[0, 0]
    resid_m = components.resid_m[indices]
    z_s = root_n * np.mean(resid_m * s_star[:, None], axis=0) / v_s

    m_star = beta_fit.projected
    z_m = root_n * _solve_moment(beta_fit.v_moment, np.mean(m_star * components.resid_y[indices][:, None], axis=0))

    alpha = np.array([f.focal_coefficients[0] for f in alpha_fits])
    t_alpha = np.array([f.t_stats()[0] for f in alpha_fits])
    return alpha, beta_fit.focal_coefficients, t_alpha, beta_fit.t_stats(), z_s, z_m


def _projected_joint_stats(indices: np.ndarray, components: JointComponents):
    p = components.projections
    n = components.n
    root_n = np.sqrt(n)
    s = p.s_perp[indices]
    m = p.m_perp[indices]
    m_prime = p.m_perp_prime[indices]
    y_prime = p.y_perp_prime[indices]
    resid_m = components.resid_m[indices]
    resid_y = components.resid_y[indices]

    v_s = np.mean(s ** 2)
    if v_s <= DEGENERATE_MOMENT_TOL * np.mean(p.s_perp ** 2):
        raise DegenerateResponse("Resampled projected exposure has no variation")
    v_m = m_prime.T @ m_prime / n
    if np.min(np.diag(v_m)) <= DEGENERATE_MOMENT_TOL * np.min(np.mean(p.m_perp_prime ** 2, axis=0)):
        raise DegenerateResponse("Resampled projected mediators have no variation")

    alpha = np.mean(s[:, None] * m, axis=0) / v_s
    sigma_alpha = np.sqrt(np.mean(resid_m ** 2, axis=0) / v_s)
    beta = _solve_moment(v_m, np.mean(m_prime * y_prime[:, None], axis=0))
    if v_m.shape == (1, 1):
        sigma_beta = np.sqrt(np.atleast_1d(np.mean(resid_y ** 2) / v_m[0, 0]))
    else:
        sigma_beta = np.sqrt(np.mean(resid_y ** 2) * np.diag(scipy.linalg.inv(v_m)))
    if np.any(sigma_alpha == 0) or np.any(sigma_beta == 0):
        raise DegenerateResponse("Resampled residual scale is zero")

    z_s = root_n * np.mean(resid_m * s[:, None], axis=0) / v_s
    z_m = root_n * _solve_moment(v_m, np.mean(m_prime * resid_y[:, None], axis=0))
    return alpha, beta, root_n * alpha / sigma_alpha, root_n * beta / sigma_beta, z_s, z_m


def joint_boot_replicate(dataset: Dataset, indices: np.ndarray, components: JointComponents,
                         config: AbConfig) -> ReplicateDraw:
    """
    Classical delta alpha*^T beta* - alpha^T beta and local term
    b_a^T Z_M + b_b^T Z_S + Z_S^T Z_M, gated by one joint indicator over all 4J statistics
    """
    if config.bootstrap.scheme == "projected":
        alpha, beta, t_alpha, t_beta, z_s, z_m = _projected_joint_stats(indices, components)
    else:
        alpha, beta, t_alpha, t_beta, z_s, z_m = _pairs_joint_stats(dataset, indices, components)

    j = components.n_mediators
    b_alpha = vector_local(config.b_alpha, j, "b_alpha")
    b_beta = vector_local(config.b_beta, j, "b_beta")
    lam_alpha, lam_beta = thresholds(config, components.n)

    alpha_stats = np.concatenate([np.abs(t_alpha), np.abs(components.t_alpha_vec)])
    beta_stats = np.concatenate([np.abs(t_beta), np.abs(components.t_beta_vec)])
    return ReplicateDraw(
        classical=float(alpha @ beta) - components.estimate,
        local=float(b_alpha @ z_m + b_beta @ z_s + z_s @ z_m),
        indicator_alpha=bool(lam_alpha > 0 and np.max(alpha_stats) <= lam_alpha),
        indicator_beta=bool(lam_beta > 0 and np.max(beta_stats) <= lam_beta),
    )


def adaptive_joint_test(dataset: Dataset, config: AbConfig = None, method: str = None,
                        return_distribution: bool = False):
    """
    Adaptive bootstrap test of H0: alpha_S^T beta_M = 0 for J >= 1 mediators

    Args:
        dataset: data with J mediator columns
        config: test settings; b_alpha / b_beta may be scalars or length-J lists
        method: tag override ("joint-ab" / "joint-b")
        return_distribution: also return the BootstrapDistribution

    Returns:
        TestResult (and BootstrapDistribution if requested)
    """
    config = config or AbConfig()
    components = joint_components(dataset)
    lam_alpha, lam_beta = thresholds(config, dataset.n)
    if method is None:
        method = "joint-ab" if (lam_alpha > 0 or lam_beta > 0) else "joint-b"

    def replicate(rng):
        indices = draw_pair_indices(dataset.n, rng)
        return joint_boot_replicate(dataset, indices, components, config)

    draws, redraws = run_replicates(replicate, config.bootstrap)
    diagnostics = {
        "n_mediators": float(components.n_mediators),
        "lambda_n": lam_alpha,
        "direct_effect": components.projections.direct_effect(components.beta_vec),
    }
    diagnostics.update({f"alpha_{name}": float(a) for name, a in zip(dataset.mediator_names, components.alpha_vec)})
    diagnostics.update({f"beta_{name}": float(b) for name, b in zip(dataset.mediator_names, components.beta_vec)})
    return summarize(
        method=method,
        draws=draws,
        observed=components.estimate,
        estimate=components.estimate,
        n=dataset.n,
        config=config,
        local_scale=1.0 / dataset.n,
        redraws=redraws,
        diagnostics=diagnostics,
        return_distribution=return_distribution,
    )


def classical_joint_test(dataset: Dataset, config: AbConfig = None, return_distribution: bool = False):
    config = (config or AbConfig()).classical()
    return adaptive_joint_test(dataset, config, method="joint-b", return_distribution=return_distribution)


def single_mediator_test(dataset: Dataset, method: str, config: AbConfig = None) -> TestResult:
    """
    Run one of the single-mediator methods on a one-mediator dataset
    """
    config = config or AbConfig()
    if method == "poc-ab":
        return adaptive_poc_test(dataset, config)
    if method == "poc-b":
        return classical_poc_test(dataset, config)
    if method == "poc-sobel":
        return sobel_test(poc_components(dataset), config)
    if method == "js-ab":
        return adaptive_js_test(dataset, config)
    if method == "js-b":
        return classical_js_test(dataset, config)
    if method == "js-maxp":
        return maxp_test(js_components(dataset), config)
    raise InputError(f"'{method}' is not a single-mediator method; choose from {SINGLE_MEDIATOR_METHODS}")


def individual_within_multi_test(dataset: Dataset, target: Union[int, str], config: AbConfig = None,
                                 method: str = "poc-ab") -> TestResult:
    """
    Test one mediator's effect with the non-target mediators moved into the covariates

    Args:
        dataset: data with J >= 2 mediators
        target: mediator index (0-based) or name
        config: test settings
        method: single-mediator method tag

    Returns:
        TestResult tagged with the target mediator
    """
    if dataset.n_mediators < 2:
        raise InputError("individual_within_multi_test needs at least two mediators")
    if isinstance(target, str):
        if target not in dataset.mediator_names:
            raise InputError(f"Unknown mediator '{target}'")
        target = dataset.mediator_names.index(target)
    derived = dataset.with_mediators_as_covariates(target)
    result = single_mediator_test(derived, method, config)
    return result.model_copy(update={"target": dataset.mediator_names[target]})
