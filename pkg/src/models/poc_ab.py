"""
Product-of-Coefficients Tests
Sobel, the classical pairs bootstrap of alpha*beta, and the adaptive
bootstrap that switches to a local statistic near the doubly-null point
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np
from scipy import stats

from src.api.models import AbConfig, TestResult
from src.data_processing.dataset import Dataset
from src.exceptions import DegenerateResponse, InputError
from src.models.adaptive import ReplicateDraw, indicator, scalar_local, summarize, thresholds
from src.models.regression import DEGENERATE_MOMENT_TOL, ProjectionSet, fit_ols, projection_set
from src.models.resampling import draw_pair_indices, run_replicates

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PocComponents:
    """
    Single-mediator estimates: alpha_hat from M ~ S + X, beta_hat from Y ~ M + X + S
    """
    alpha_hat: float
    beta_hat: float
    sigma_alpha: float
    sigma_beta: float
    t_alpha: float
    t_beta: float
    n: int
    projections: ProjectionSet
    resid_m: np.ndarray
    resid_y: np.ndarray

    @property
    def estimate(self) -> float:
        return self.alpha_hat * self.beta_hat


def poc_components(dataset: Dataset) -> PocComponents:
    """
    Fit both models of a single-mediator dataset

    Args:
        dataset: Dataset with exactly one mediator

    Returns:
        PocComponents
    """
    if dataset.n_mediators != 1:
        raise InputError(
            f"Product-of-coefficients tests need one mediator, got {dataset.n_mediators}"
        )
    alpha_fit = fit_ols(dataset, "mediator")
    beta_fit = fit_ols(dataset, "outcome")
    t_alpha = float(alpha_fit.t_stats()[0])
    t_beta = float(beta_fit.t_stats()[0])

    return PocComponents(
        alpha_hat=float(alpha_fit.focal_coefficients[0]),
        beta_hat=float(beta_fit.focal_coefficients[0]),
        sigma_alpha=float(alpha_fit.sigma_hat[0]),
        sigma_beta=float(beta_fit.sigma_hat[0]),
        t_alpha=t_alpha,
        t_beta=t_beta,
        n=dataset.n,
        projections=projection_set(dataset),
        resid_m=alpha_fit.residuals,
        resid_y=beta_fit.residuals,
    )


class ReplicateStats(NamedTuple):
    """Bootstrap-sample quantities shared by the PoC and JS replicates"""
    alpha: float
    beta: float
    sigma_alpha: float
    sigma_beta: float
    t_alpha: float
    t_beta: float
    z_s: float
    z_m: float


def _pairs_stats(dataset: Dataset, indices: np.ndarray, components: PocComponents) -> ReplicateStats:
    resample = dataset.take(indices)
    alpha_fit = fit_ols(resample, "mediator")
    beta_fit = fit_ols(resample, "outcome")
    n = components.n
    root_n = np.sqrt(n)

    s_star = alpha_fit.projected[:, 0]
    m_star = beta_fit.projected[:, 0]
    z_s = root_n * np.mean(components.resid_m[indices] * s_star) / alpha_fit.v_moment[0, 0]
    z_m = root_n * np.mean(components.resid_y[indices] * m_star) / beta_fit.v_moment[0, 0]

    t_alpha, t_beta = alpha_fit.t_stats()[0], beta_fit.t_stats()[0]
    return ReplicateStats(
        alpha=float(alpha_fit.focal_coefficients[0]),
        beta=float(beta_fit.focal_coefficients[0]),
        sigma_alpha=float(alpha_fit.sigma_hat[0]),
        sigma_beta=float(beta_fit.sigma_hat[0]),
        t_alpha=float(t_alpha),
        t_beta=float(t_beta),
        z_s=float(z_s),
        z_m=float(z_m),
    )


def _projected_stats(indices: np.ndarray, components: PocComponents) -> ReplicateStats:
    p = components.projections
    s = p.s_perp[indices]
    m = p.m_perp[indices, 0]
    m_prime = p.m_perp_prime[indices, 0]
    y_prime = p.y_perp_prime[indices]
    resid_m = components.resid_m[indices]
    resid_y = components.resid_y[indices]

    v_s = np.mean(s ** 2)
    v_m = np.mean(m_prime ** 2)
    if v_s <= DEGENERATE_MOMENT_TOL * np.mean(p.s_perp ** 2):
        raise DegenerateResponse("Resampled projected exposure has no variation")
    if v_m <= DEGENERATE_MOMENT_TOL * np.mean(p.m_perp_prime[:, 0] ** 2):
        raise DegenerateResponse("Resampled projected mediator has no variation")

    alpha = np.mean(s * m) / v_s
    beta = np.mean(m_prime * y_prime) / v_m
    sigma_alpha = np.sqrt(np.mean(resid_m ** 2) / v_s)
    sigma_beta = np.sqrt(np.mean(resid_y ** 2) / v_m)
    if sigma_alpha == 0 or sigma_beta == 0:
        raise DegenerateResponse("Resampled residual scale is zero")

    root_n = np.sqrt(components.n)
    return ReplicateStats(
        alpha=float(alpha),
        beta=float(beta),
        sigma_alpha=float(sigma_alpha),
        sigma_beta=float(sigma_beta),
        t_alpha=float(root_n * alpha / sigma_alpha),
        t_beta=float(root_n * beta / sigma_beta),
        z_s=float(root_n * np.mean(resid_m * s) / v_s),
        z_m=float(root_n * np.mean(resid_y * m_prime) / v_m),
    )


def replicate_stats(dataset: Dataset, indices: np.ndarray, components: PocComponents,
                    scheme: str = "pairs") -> ReplicateStats:
    """
    Refit on a resample (pairs) or resample precomputed projected rows (projected)

    Z*_S = sqrt(n) mean*(eps_M S*_perp) / V*_S and Z*_M = sqrt(n) mean*(eps_Y M*_perp') / V*_M,
    with eps the residuals of the original fit taken at the resampled rows.
    """
    if scheme == "projected":
        return _projected_stats(indices, components)
    return _pairs_stats(dataset, indices, components)


def poc_boot_replicate(dataset: Dataset, indices: np.ndarray, components: PocComponents,
                       config: AbConfig) -> ReplicateDraw:
    """
    Classical delta, local term and indicator pair for one resample

    Args:
        dataset: original data
        indices: resampled row indices
        components: estimates from the original data
        config: test settings

    Returns:
        ReplicateDraw
    """
    stats_star = replicate_stats(dataset, indices, components, config.bootstrap.scheme)
    b_alpha = scalar_local(config.b_alpha, "b_alpha")
    b_beta = scalar_local(config.b_beta, "b_beta")
    lam_alpha, lam_beta = thresholds(config, components.n)

    classical = stats_star.alpha * stats_star.beta - components.estimate
    local = b_alpha * stats_star.z_m + b_beta * stats_star.z_s + stats_star.z_s * stats_star.z_m
    return ReplicateDraw(
        classical=classical,
        local=local,
        indicator_alpha=indicator(stats_star.t_alpha, components.t_alpha, lam_alpha),
        indicator_beta=indicator(stats_star.t_beta, components.t_beta, lam_beta),
    )


def sobel_statistic(alpha: float, beta: float, se_alpha: float, se_beta: float) -> Tuple[float, float]:
    """
    Delta-method z = alpha*beta / sqrt(beta^2 se_alpha^2 + alpha^2 se_beta^2)

    Returns:
        Tuple of (z, two-sided normal p-value)
    """
    numerator = alpha * beta
    if numerator == 0:
        return 0.0, 1.0
    denominator = np.sqrt(beta ** 2 * se_alpha ** 2 + alpha ** 2 * se_beta ** 2)
    if denominator == 0:
        raise DegenerateResponse("Sobel standard error is zero")
    z = float(numerator / denominator)
    return z, float(2 * stats.norm.sf(abs(z)))


def sobel_test(components: PocComponents, config: AbConfig = None) -> TestResult:
    config = config or AbConfig()
    root_n = np.sqrt(components.n)
    z, p_value = sobel_statistic(
        components.alpha_hat,
        components.beta_hat,
        components.sigma_alpha / root_n,
        components.sigma_beta / root_n,
    )
    return TestResult(
        method="poc-sobel",
        estimate=components.estimate,
        statistic=z,
        p_value=max(p_value, np.finfo(float).tiny),
        n=components.n,
        decisions={f"{w:g}": p_value < w for w in config.omega_grid},
        config=config,
    )


def adaptive_poc_test(dataset: Dataset, config: AbConfig = None, method: str = None,
                      return_distribution: bool = False):
    """
    Adaptive bootstrap test of H0: alpha_S * beta_M = 0

    Per replicate U* = (alpha*beta* - alpha_hat beta_hat)(1 - I) + n^-1 local * I,
    compared against the observed alpha_hat * beta_hat. Zero thresholds give
    the classical pairs bootstrap ("poc-b").

    Args:
        dataset: single-mediator data
        config: test settings
        method: tag override
        return_distribution: also return the BootstrapDistribution

    Returns:
        TestResult (and BootstrapDistribution if requested)
    """
    config = config or AbConfig()
    components = poc_components(dataset)
    lam_alpha, lam_beta = thresholds(config, dataset.n)
    if method is None:
        method = "poc-ab" if (lam_alpha > 0 or lam_beta > 0) else "poc-b"

    def replicate(rng):
        indices = draw_pair_indices(dataset.n, rng)
        return poc_boot_replicate(dataset, indices, components, config)

    draws, redraws = run_replicates(replicate, config.bootstrap)
    return summarize(
        method=method,
        draws=draws,
        observed=components.estimate,
        estimate=components.estimate,
        n=dataset.n,
        config=config,
        local_scale=1.0 / dataset.n,
        redraws=redraws,
        diagnostics={
            "alpha_hat": components.alpha_hat,
            "beta_hat": components.beta_hat,
            "direct_effect": components.projections.direct_effect(components.beta_hat),
            "t_alpha": components.t_alpha,
            "t_beta": components.t_beta,
            "lambda_n_alpha": lam_alpha,
            "lambda_n_beta": lam_beta,
        },
        return_distribution=return_distribution,
    )


def classical_poc_test(dataset: Dataset, config: AbConfig = None, return_distribution: bool = False):
    """Classical pairs bootstrap of alpha_hat * beta_hat ("poc-b")"""
    config = (config or AbConfig()).classical()
    return adaptive_poc_test(dataset, config, method="poc-b", return_distribution=return_distribution)
