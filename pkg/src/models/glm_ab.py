"""
Adaptive Bootstrap for Generalized Linear Mediation Models

Scenario I: binary mediator and binary outcome, NIE on the log odds-ratio scale.
Scenario II: binary mediator and continuous outcome, NIE as a risk difference.
Both evaluate the conditional NIE at a query (s, s*, x).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit, logit

from src.api.models import AbConfig, NieQuery
from src.data_processing.dataset import Dataset
from src.exceptions import InputError, ProbabilityBoundary
from src.models.adaptive import ReplicateDraw, indicator, scalar_local, summarize, thresholds
from src.models.regression import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    LinearFit,
    LogisticFit,
    fit_logistic,
    fit_ols,
)
from src.models.resampling import draw_pair_indices, run_replicates

logger = logging.getLogger(__name__)

PROBABILITY_EPS = 1e-12
SCENARIOS = {"I": "I", "II": "II", "1": "I", "2": "II", "glm1": "I", "glm2": "II"}


def _scenario(value) -> str:
    key = str(value)
    if key not in SCENARIOS:
        raise InputError(f"Unknown GLM scenario '{value}', expected I or II")
    return SCENARIOS[key]


def _g_prime(mu):
    p = expit(mu)
    return p * (1.0 - p)


def query_row(query: NieQuery, n_covariates: int) -> np.ndarray:
    """Covariate row of the query; defaults to the intercept row (1, 0, ..., 0)"""
    if query.x is None:
        row = np.zeros(n_covariates)
        row[0] = 1.0
        return row
    row = np.asarray(query.x, dtype=float)
    if row.shape != (n_covariates,):
        raise InputError(f"Query x has {row.size} entries, expected {n_covariates} (intercept included)")
    return row


def mediator_contrast(alpha_coef: np.ndarray, x: np.ndarray, s: float,
                      s_star: float) -> Tuple[float, np.ndarray]:
    """
    d_alpha = g(alpha_S s + x'alpha_X) - g(alpha_S s* + x'alpha_X) and its gradient W_alpha

    alpha_coef is ordered (alpha_S, alpha_X...).
    """
    alpha_s, alpha_x = alpha_coef[0], alpha_coef[1:]
    mu_s = alpha_s * s + x @ alpha_x
    mu_star = alpha_s * s_star + x @ alpha_x
    d_alpha = float(expit(mu_s) - expit(mu_star))
    w_alpha = (_g_prime(mu_s) * np.concatenate([[s], x])
               - _g_prime(mu_star) * np.concatenate([[s_star], x]))
    return d_alpha, w_alpha


def outcome_contrast(beta_coef: np.ndarray, x: np.ndarray, s: float) -> Tuple[float, float, np.ndarray]:
    """
    d_beta = g(beta_M + x'beta_X + tau s) - g(x'beta_X + tau s), P* = g(x'beta_X + tau s)
    and the gradient W_beta

    beta_coef is ordered (beta_M, beta_X..., tau_S).
    """
    beta_m, beta_x, tau = beta_coef[0], beta_coef[1:-1], beta_coef[-1]
    mu0 = x @ beta_x + tau * s
    mu1 = beta_m + mu0
    d_beta = float(expit(mu1) - expit(mu0))
    p_star = float(expit(mu0))
    w_beta = (_g_prime(mu1) * np.concatenate([[1.0], x, [s]])
              - _g_prime(mu0) * np.concatenate([[0.0], x, [s]]))
    return d_beta, p_star, w_beta


def nie_log_or(alpha_coef: np.ndarray, beta_coef: np.ndarray, x: np.ndarray,
               s: float, s_star: float) -> float:
    """
    l(P_s) - l(P_s*) with P_i = g(i alpha_S + x'alpha_X) d_beta + P*
    """
    alpha_s, alpha_x = alpha_coef[0], alpha_coef[1:]
    d_beta, p_star, _ = outcome_contrast(beta_coef, x, s)
    p_s = expit(s * alpha_s + x @ alpha_x) * d_beta + p_star
    p_s_star = expit(s_star * alpha_s + x @ alpha_x) * d_beta + p_star
    for p in (p_s, p_s_star):
        if not PROBABILITY_EPS < p < 1 - PROBABILITY_EPS:
            raise ProbabilityBoundary(f"Plug-in probability {p!r} is at the boundary")
    return float(logit(p_s) - logit(p_s_star))


def nie_risk_difference(alpha_coef: np.ndarray, beta_m: float, x: np.ndarray,
                        s: float, s_star: float) -> float:
    """beta_M {g(alpha_S s + x'alpha_X) - g(alpha_S s* + x'alpha_X)}"""
    d_alpha, _ = mediator_contrast(alpha_coef, x, s, s_star)
    return float(beta_m * d_alpha)


@dataclass(frozen=True, eq=False)
class GlmComponents:
    """
    Fits and plug-in contrasts at one query
    """
    scenario: str
    alpha_fit: LogisticFit
    beta_fit: Union[LogisticFit, LinearFit]
    x: np.ndarray
    s: float
    s_star: float
    d_alpha: float
    d_beta: float
    w_alpha: np.ndarray
    w_beta: Optional[np.ndarray]
    p_star: Optional[float]
    gamma_hat: Optional[float]
    t_alpha: float
    t_beta: float
    n: int

    @property
    def beta_coefficients(self) -> np.ndarray:
        return self.beta_fit.coefficients


def glm_components(dataset: Dataset, scenario, query: NieQuery = None,
                   max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> GlmComponents:
    """
    Fit the logistic mediator model and the scenario's outcome model

    Args:
        dataset: single binary mediator; binary outcome in scenario I
        scenario: "I" or "II"
        query: exposure contrast and covariate row
        max_iter: IRLS iteration cap
        tol: IRLS tolerance

    Returns:
        GlmComponents
    """
    scenario = _scenario(scenario)
    query = query or NieQuery()
    if dataset.n_mediators != 1:
        raise InputError("GLM tests take a single binary mediator")
    x = query_row(query, dataset.n_covariates)

    alpha_fit = fit_logistic(dataset, "mediator", max_iter=max_iter, tol=tol)
    d_alpha, w_alpha = mediator_contrast(alpha_fit.coefficients, x, query.s, query.s_star)

    if scenario == "I":
        beta_fit = fit_logistic(dataset, "outcome", max_iter=max_iter, tol=tol)
        d_beta, p_star, w_beta = outcome_contrast(beta_fit.coefficients, x, query.s)
        gamma_hat = 1.0 / (p_star * (1.0 - p_star))
        t_beta = beta_fit.t_stat(0)
    else:
        beta_fit = fit_ols(dataset, "outcome")
        d_beta, p_star, w_beta, gamma_hat = float(beta_fit.coefficients[0]), None, None, None
        t_beta = float(beta_fit.t_stats()[0])

    return GlmComponents(
        scenario=scenario,
        alpha_fit=alpha_fit,
        beta_fit=beta_fit,
        x=x,
        s=query.s,
        s_star=query.s_star,
        d_alpha=d_alpha,
        d_beta=d_beta,
        w_alpha=w_alpha,
        w_beta=w_beta,
        p_star=p_star,
        gamma_hat=gamma_hat,
        t_alpha=alpha_fit.t_stat(0),
        t_beta=t_beta,
        n=dataset.n,
    )


def nie_logistic_outcome(components: GlmComponents, query: NieQuery = None) -> float:
    """Scenario I log odds-ratio NIE at the query (defaults to the components' query)"""
    x, s, s_star = _resolve_query(components, query)
    return nie_log_or(components.alpha_fit.coefficients, components.beta_coefficients, x, s, s_star)


def nie_linear_outcome(components: GlmComponents, query: NieQuery = None) -> float:
    """Scenario II risk-difference NIE at the query"""
    x, s, s_star = _resolve_query(components, query)
    return nie_risk_difference(
        components.alpha_fit.coefficients, float(components.beta_coefficients[0]), x, s, s_star
    )


def _resolve_query(components: GlmComponents, query: Optional[NieQuery]):
    if query is None:
        return components.x, components.s, components.s_star
    return query_row(query, components.x.shape[0]), query.s, query.s_star


def nie_estimate(components: GlmComponents) -> float:
    if components.scenario == "I":
        return nie_logistic_outcome(components)
    return nie_linear_outcome(components)


def _score_direction(fit: LogisticFit, indices: np.ndarray, refit: LogisticFit,
                     gradient: np.ndarray) -> float:
    """
    W*^T (info*)^-1 sqrt(n) mean*((response - g_hat) D), with g_hat and D from the original fit
    """
    n = fit.n
    residual = fit.response[indices] - fit.fitted_probs[indices]
    score = np.mean(residual[:, None] * fit.design[indices], axis=0)
    return float(gradient @ np.linalg.solve(refit.info_matrix, np.sqrt(n) * score))


def glm_boot_replicate(dataset: Dataset, indices: np.ndarray, components: GlmComponents,
                       config: AbConfig, max_iter: int = DEFAULT_MAX_ITER,
                       tol: float = DEFAULT_TOL) -> ReplicateDraw:
    """
    Refit both models on the resample; classical delta NIE* - NIE and the local term

    Scenario I local term: (d_ba Z_beta + d_bb Z_alpha + Z_alpha Z_beta) * gamma*.
    Scenario II local term: d_ba Z_beta + b_beta Z_alpha + Z_alpha Z_beta, with Z_beta
    in the linear-model form.
    """
    resample = dataset.take(indices)
    n = components.n
    x, s, s_star = components.x, components.s, components.s_star
    b_alpha = scalar_local(config.b_alpha, "b_alpha")
    b_beta = scalar_local(config.b_beta, "b_beta")
    lam_alpha, lam_beta = thresholds(config, n)

    alpha_refit = fit_logistic(resample, "mediator", max_iter=max_iter, tol=tol)
    _, w_alpha_star = mediator_contrast(alpha_refit.coefficients, x, s, s_star)
    z_alpha = _score_direction(components.alpha_fit, indices, alpha_refit, w_alpha_star)
    t_alpha_star = alpha_refit.t_stat(0)

    alpha_x = components.alpha_fit.coefficients[1:]
    d_b_alpha = float(_g_prime(x @ alpha_x)) * (s - s_star) * b_alpha

    if components.scenario == "I":
        beta_refit = fit_logistic(resample, "outcome", max_iter=max_iter, tol=tol)
        nie_star = nie_log_or(alpha_refit.coefficients, beta_refit.coefficients, x, s, s_star)
        _, p_star_star, w_beta_star = outcome_contrast(beta_refit.coefficients, x, s)
        z_beta = _score_direction(components.beta_fit, indices, beta_refit, w_beta_star)
        gamma_star = 1.0 / (p_star_star * (1.0 - p_star_star))

        beta_coef = components.beta_coefficients
        d_b_beta = float(_g_prime(x @ beta_coef[1:-1] + beta_coef[-1] * s)) * (s - s_star) * b_beta
        local = (d_b_alpha * z_beta + d_b_beta * z_alpha + z_alpha * z_beta) * gamma_star
        t_beta_star = beta_refit.t_stat(0)
    else:
        beta_refit = fit_ols(resample, "outcome")
        nie_star = nie_risk_difference(
            alpha_refit.coefficients, float(beta_refit.coefficients[0]), x, s, s_star
        )
        m_star = beta_refit.projected[:, 0]
        z_beta = float(np.sqrt(n) * np.mean(components.beta_fit.residuals[indices] * m_star)
                       / beta_refit.v_moment[0, 0])
        local = d_b_alpha * z_beta + b_beta * z_alpha + z_alpha * z_beta
        t_beta_star = float(beta_refit.t_stats()[0])

    return ReplicateDraw(
        classical=nie_star - nie_estimate(components),
        local=float(local),
        indicator_alpha=indicator(t_alpha_star, components.t_alpha, lam_alpha),
        indicator_beta=indicator(t_beta_star, components.t_beta, lam_beta),
    )


def adaptive_glm_test(dataset: Dataset, scenario, query: NieQuery = None, config: AbConfig = None,
                      method: str = None, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
                      return_distribution: bool = False):
    """
    Adaptive bootstrap test of a zero conditional NIE

    Per replicate U*_e = classical delta (1 - I) + n^-1 local * I, compared
    with the observed NIE estimate. Zero thresholds give "glm1-b" / "glm2-b".

    Args:
        dataset: binary mediator (and binary outcome for scenario I)
        scenario: "I" or "II"
        query: exposure contrast and covariate row
        config: test settings (pairs scheme only)
        method: tag override
        max_iter: IRLS iteration cap
        tol: IRLS tolerance
        return_distribution: also return the BootstrapDistribution

    Returns:
        TestResult (and BootstrapDistribution if requested)
    """
    config = config or AbConfig()
    if config.bootstrap.scheme != "pairs":
        raise InputError("GLM tests support the pairs scheme only")
    query = query or NieQuery()
    components = glm_components(dataset, scenario, query, max_iter=max_iter, tol=tol)
    estimate = nie_estimate(components)
    lam_alpha, lam_beta = thresholds(config, dataset.n)
    prefix = "glm1" if components.scenario == "I" else "glm2"
    if method is None:
        method = f"{prefix}-ab" if (lam_alpha > 0 or lam_beta > 0) else f"{prefix}-b"

    def replicate(rng):
        indices = draw_pair_indices(dataset.n, rng)
        return glm_boot_replicate(dataset, indices, components, config, max_iter=max_iter, tol=tol)

    draws, redraws = run_replicates(replicate, config.bootstrap)
    diagnostics = {
        "d_alpha": components.d_alpha,
        "d_beta": components.d_beta,
        "t_alpha": components.t_alpha,
        "t_beta": components.t_beta,
        "lambda_n_alpha": lam_alpha,
        "lambda_n_beta": lam_beta,
    }
    if components.gamma_hat is not None:
        diagnostics["gamma_hat"] = components.gamma_hat
    return summarize(
        method=method,
        draws=draws,
        observed=estimate,
        estimate=estimate,
        n=dataset.n,
        config=config,
        local_scale=1.0 / dataset.n,
        redraws=redraws,
        diagnostics=diagnostics,
        return_distribution=return_distribution,
    )


def classical_glm_test(dataset: Dataset, scenario, query: NieQuery = None, config: AbConfig = None,
                       max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL,
                       return_distribution: bool = False):
    config = (config or AbConfig()).classical()
    prefix = "glm1" if _scenario(scenario) == "I" else "glm2"
    return adaptive_glm_test(dataset, scenario, query, config, method=f"{prefix}-b", max_iter=max_iter,
                             tol=tol, return_distribution=return_distribution)
