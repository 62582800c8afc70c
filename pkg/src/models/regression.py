"""
Regression Core for medboot
Frisch-Waugh-Lovell projections, OLS fits of the mediator and outcome
models, and IRLS logistic fits for binary mediators/outcomes
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.special import expit

from src.data_processing.dataset import Dataset
from src.exceptions import (
    DegenerateResponse,
    InputError,
    NonConvergence,
    SeparationSuspected,
    SingularDesign,
)

logger = logging.getLogger(__name__)

# Relative condition number of the (column-equilibrated) Gram matrix
GRAM_CONDITION_LIMIT = 1e12
DEGENERATE_MOMENT_TOL = 1e-12
SEPARATION_BOUND = 30.0
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-8

MODELS = ("mediator", "outcome")


def _as_matrix(values) -> np.ndarray:
    array = np.asarray(values, dtype=float)
    return array.reshape(-1, 1) if array.ndim == 1 else array


def check_design(design: np.ndarray, name: str = "design") -> None:
    """
    Raise SingularDesign when the Gram matrix of `design` is numerically singular

    Columns are scaled to unit norm first so the check does not depend on units.
    """
    design = _as_matrix(design)
    n, k = design.shape
    if n < k:
        raise SingularDesign(f"{name}: {n} rows cannot support {k} columns")
    norms = np.linalg.norm(design, axis=0)
    if np.any(norms == 0):
        raise SingularDesign(f"{name}: column {int(np.argmin(norms))} is identically zero")
    singular_values = scipy.linalg.svdvals(design / norms)
    smallest = singular_values[-1]
    if smallest == 0 or (singular_values[0] / smallest) ** 2 > GRAM_CONDITION_LIMIT:
        raise SingularDesign(f"{name}: Gram matrix condition number exceeds {GRAM_CONDITION_LIMIT:g}")


def fwl_project(target, adjusters) -> Tuple[np.ndarray, np.ndarray]:
    """
    Residualize `target` on `adjusters` by least squares

    Args:
        target: length-n vector or n x k matrix
        adjusters: n x a matrix (or vector)

    Returns:
        Tuple of (projected target, projection coefficients of shape (a,) or (a, k))
    """
    adjusters = _as_matrix(adjusters)
    check_design(adjusters, "adjusters")
    target = np.asarray(target, dtype=float)

    q, r = scipy.linalg.qr(adjusters, mode="economic")
    qt = q.T @ target
    coefficients = scipy.linalg.solve_triangular(r, qt)
    projected = target - q @ qt
    return projected, coefficients


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    """
    Projected columns of a (single- or multi-mediator) dataset

    s_perp: S residualized on X
    m_perp: M residualized on X (n x J)
    m_perp_prime: M residualized on (X, S) (n x J)
    y_perp_prime: Y residualized on (X, S)
    q_moments: projection coefficients keyed q1_s, q1_m, q2_m, q2_y
    """
    s_perp: np.ndarray
    m_perp: np.ndarray
    m_perp_prime: np.ndarray
    y_perp_prime: np.ndarray
    q_moments: Dict[str, np.ndarray]

    def direct_effect(self, beta_vec) -> float:
        """
        Exposure coefficient of the outcome model, q2_y[S] - q2_m[S] . beta

        (X, S) coefficients of Y ~ M + X + S are q2_y - q2_m beta; S is the last row.
        """
        beta_vec = np.atleast_1d(np.asarray(beta_vec, dtype=float))
        q2_m = self.q_moments["q2_m"].reshape(self.q_moments["q2_y"].shape[0], -1)
        return float(self.q_moments["q2_y"][-1] - q2_m[-1] @ beta_vec)


def projection_set(dataset: Dataset) -> ProjectionSet:
    """S and M on X for the mediator model; M and Y on (X, S) of the outcome model"""
    x = dataset.covariates
    xs = np.column_stack([dataset.outcome_model_covariates, dataset.outcome_model_exposure])
    s_perp, q1_s = fwl_project(dataset.exposure, x)
    m_perp, q1_m = fwl_project(dataset.mediators, x)
    m_perp_prime, q2_m = fwl_project(dataset.mediators, xs)
    y_perp_prime, q2_y = fwl_project(dataset.outcome, xs)
    return ProjectionSet(
        s_perp=s_perp,
        m_perp=m_perp,
        m_perp_prime=m_perp_prime,
        y_perp_prime=y_perp_prime,
        q_moments={"q1_s": q1_s, "q1_m": q1_m, "q2_m": q2_m, "q2_y": q2_y},
    )


@dataclass(frozen=True, eq=False)
class LinearFit:
    """
    OLS fit with the focal regressor(s) placed first in `coefficients`

    sigma_hat follows sigma^2 = mean(residual^2) * [V^-1]_jj with divisor n,
    which for one focal regressor is mean(residual^2) / mean(projected^2).
    """
    model: str
    names: Tuple[str, ...]
    coefficients: np.ndarray
    residuals: np.ndarray
    projected: np.ndarray
    v_moment: np.ndarray
    sigma_hat: np.ndarray

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def n_focal(self) -> int:
        return self.projected.shape[1]

    @property
    def focal_coefficients(self) -> np.ndarray:
        return self.coefficients[:self.n_focal]

    @property
    def se(self) -> np.ndarray:
        return self.sigma_hat / np.sqrt(self.n)

    def t_stats(self) -> np.ndarray:
        """sqrt(n) * coefficient / sigma_hat for each focal regressor"""
        if np.any(self.sigma_hat <= 0):
            raise DegenerateResponse(f"{self.model} model has zero residual scale")
        return np.sqrt(self.n) * self.focal_coefficients / self.sigma_hat

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def _fit_projected(response: np.ndarray, regressors: np.ndarray, adjusters: np.ndarray,
                   names: Tuple[str, ...], model: str) -> LinearFit:
    n = response.shape[0]
    n_params = regressors.shape[1] + adjusters.shape[1]
    if n <= n_params:
        raise SingularDesign(f"{model} model: n={n} must exceed {n_params} parameters")

    reg_perp, q_reg = fwl_project(regressors, adjusters)
    scale = np.mean(regressors ** 2, axis=0)
    moment = np.mean(reg_perp ** 2, axis=0)
    for c in range(regressors.shape[1]):
        if moment[c] <= DEGENERATE_MOMENT_TOL * max(scale[c], np.finfo(float).tiny):
            if np.ptp(regressors[:, c]) == 0:
                raise DegenerateResponse(f"{model} model: regressor '{names[c]}' is constant")
            raise SingularDesign(f"{model} model: regressor '{names[c]}' is collinear with the adjusters")
    check_design(np.column_stack([regressors, adjusters]), f"{model} design")

    resp_perp, q_resp = fwl_project(response, adjusters)
    v_moment = reg_perp.T @ reg_perp / n
    cross = reg_perp.T @ resp_perp / n
    if regressors.shape[1] == 1:
        focal = cross / v_moment[0]
    else:
        focal = scipy.linalg.solve(v_moment, cross, assume_a="pos")

    residuals = resp_perp - reg_perp @ focal
    # exact fits leave rounding noise; snap it so sigma_hat is exactly 0
    response_scale = np.sqrt(np.mean(response ** 2))
    if np.sqrt(np.mean(residuals ** 2)) <= DEGENERATE_MOMENT_TOL * max(response_scale, np.finfo(float).tiny):
        residuals = np.zeros_like(residuals)
    adjuster_coefs = q_resp - q_reg @ focal
    sigma2 = np.mean(residuals ** 2)
    if regressors.shape[1] == 1:
        sigma_hat = np.sqrt(np.atleast_1d(sigma2 / v_moment[0, 0]))
    else:
        sigma_hat = np.sqrt(sigma2 * np.diag(scipy.linalg.inv(v_moment)))

    return LinearFit(
        model=model,
        names=names,
        coefficients=np.concatenate([focal, adjuster_coefs]),
        residuals=residuals,
        projected=reg_perp,
        v_moment=v_moment,
        sigma_hat=sigma_hat,
    )


def fit_ols(dataset: Dataset, model: str = "mediator", mediator: int = 0) -> LinearFit:
    """
    Fit the mediator model M_j ~ S + X or the outcome model Y ~ M + X + S

    Args:
        dataset: Input data
        model: "mediator" or "outcome"
        mediator: mediator column for the mediator model; the outcome model
            always uses every mediator column

    Returns:
        LinearFit with S (mediator model) or M (outcome model) as focal regressor(s)
    """
    if model == "mediator":
        return _fit_projected(
            response=dataset.mediator(mediator),
            regressors=dataset.exposure.reshape(-1, 1),
            adjusters=dataset.covariates,
            names=(dataset.exposure_name,) + dataset.covariate_names,
            model=model,
        )
    if model == "outcome":
        return _fit_projected(
            response=dataset.outcome,
            regressors=dataset.mediators,
            adjusters=np.column_stack([dataset.outcome_model_covariates, dataset.outcome_model_exposure]),
            names=dataset.mediator_names + dataset.covariate_names + (dataset.exposure_name,),
            model=model,
        )
    raise InputError(f"Unknown model '{model}', expected one of {MODELS}")


@dataclass(frozen=True, eq=False)
class LogisticFit:
    """
    Logistic regression fit; info_matrix is mean(g(1-g) D D^T) over rows
    """
    names: Tuple[str, ...]
    coefficients: np.ndarray
    fitted_probs: np.ndarray
    info_matrix: np.ndarray
    design: np.ndarray
    response: np.ndarray
    converged: bool
    iterations: int

    @property
    def n(self) -> int:
        return self.response.shape[0]

    def info_inverse(self) -> np.ndarray:
        return scipy.linalg.inv(self.info_matrix)

    def score(self) -> np.ndarray:
        return self.design.T @ (self.response - self.fitted_probs) / self.n

    def t_stat(self, index: int = 0) -> float:
        """sqrt(n) * coef / sqrt([info^-1]_jj), the model-based Wald statistic"""
        variance = self.info_inverse()[index, index]
        return float(np.sqrt(self.n) * self.coefficients[index] / np.sqrt(variance))

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def irls(design: np.ndarray, response: np.ndarray, names: Optional[Tuple[str, ...]] = None,
         max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> LogisticFit:
    """
    Newton-Raphson / IRLS for logistic regression, started at the zero vector

    Args:
        design: n x k design matrix
        response: binary response in {0, 1}
        names: coefficient names
        max_iter: iteration cap
        tol: convergence tolerance on the max-abs coefficient change

    Returns:
        LogisticFit
    """
    design = _as_matrix(design)
    response = np.asarray(response, dtype=float)
    if not np.all((response == 0) | (response == 1)):
        raise InputError("Logistic response must be binary (0/1)")
    check_design(design, "logistic design")

    n, k = design.shape
    names = tuple(names) if names is not None else tuple(f"b{j}" for j in range(k))
    coef = np.zeros(k)
    converged = False
    iteration = 0

    for iteration in range(1, max_iter + 1):
        probs = expit(design @ coef)
        weights = probs * (1.0 - probs)
        info = (design * weights[:, None]).T @ design / n
        score = design.T @ (response - probs) / n
        try:
            step = scipy.linalg.solve(info, score, assume_a="pos")
        except np.linalg.LinAlgError as e:
            raise SeparationSuspected(f"Information matrix lost definiteness at iteration {iteration}") from e
        coef = coef + step
        if np.max(np.abs(coef)) > SEPARATION_BOUND:
            raise SeparationSuspected(
                f"|coefficient| exceeded {SEPARATION_BOUND:g} at iteration {iteration}"
            )
        if np.max(np.abs(step)) <= tol:
            converged = True
            break

    if not converged:
        raise NonConvergence(f"IRLS did not converge in {max_iter} iterations")

    probs = expit(design @ coef)
    if probs.min() <= 0.0 or probs.max() >= 1.0:
        raise SeparationSuspected("Fitted probabilities reached 0 or 1")
    weights = probs * (1.0 - probs)
    info = (design * weights[:, None]).T @ design / n
    eigenvalues = np.linalg.eigvalsh(info)
    if eigenvalues[0] <= DEGENERATE_MOMENT_TOL * max(eigenvalues[-1], np.finfo(float).tiny):
        raise SingularDesign("Logistic information matrix is not positive definite")

    logger.debug(f"IRLS converged in {iteration} iterations")
    return LogisticFit(
        names=names,
        coefficients=coef,
        fitted_probs=probs,
        info_matrix=info,
        design=design,
        response=response,
        converged=converged,
        iterations=iteration,
    )


def fit_logistic(dataset: Dataset, model: str = "mediator", mediator: int = 0,
                 max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> LogisticFit:
    """
    Logistic mediator model M_j ~ S + X or outcome model Y ~ M_j + X + S

    Args:
        dataset: Input data with a binary response for the chosen model
        model: "mediator" or "outcome"
        mediator: mediator column
        max_iter: IRLS iteration cap
        tol: convergence tolerance

    Returns:
        LogisticFit with design columns ordered (S, X) or (M, X, S)
    """
    if model == "mediator":
        design = np.column_stack([dataset.exposure, dataset.covariates])
        names = (dataset.exposure_name,) + dataset.covariate_names
        response = dataset.mediator(mediator)
    elif model == "outcome":
        design = np.column_stack([dataset.mediator(mediator), dataset.outcome_model_covariates,
                                  dataset.outcome_model_exposure])
        names = (dataset.mediator_names[mediator],) + dataset.covariate_names + (dataset.exposure_name,)
        response = dataset.outcome
    else:
        raise InputError(f"Unknown model '{model}', expected one of {MODELS}")
    return irls(design, response, names=names, max_iter=max_iter, tol=tol)
