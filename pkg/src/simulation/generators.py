"""
Data Generators for Simulation Studies
Linear single- and multi-mediator SEMs and the two logistic scenarios.

Normals come from the inverse normal CDF applied to 53-bit uniforms drawn
from the integer stream, so a given generator state always yields the same
values on platforms with the same libm.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit, ndtri

from src.api.models import SimSpec
from src.data_processing.dataset import Dataset
from src.exceptions import InvalidConfig

logger = logging.getLogger(__name__)

_UNIFORM_BITS = 53
_UNIFORM_SCALE = float(2 ** _UNIFORM_BITS)

LINEAR_DEFAULTS = {
    "alpha_i": 1.0, "alpha_x": [1.0, 1.0],
    "beta_i": 1.0, "beta_x": [1.0, 1.0],
    "tau_s": 1.0, "sigma_m": 0.5, "sigma_y": 0.5, "x1_sd": 1.0,
}
MULTI_DEFAULTS = dict(LINEAR_DEFAULTS, x1_sd=0.5)
GLM_DEFAULTS = {
    "alpha_i": -1.0, "alpha_x": [1.0],
    "beta_i": -1.0, "beta_x": [1.0],
    "tau_s": 1.0, "sigma_m": 0.5, "sigma_y": 0.5, "x1_sd": 1.0,
}

MIXTURE_NULLS = ((0.0, 0.5), (0.5, 0.0), (0.0, 0.0))


def uniform(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniforms on the open interval (0, 1) from 53-bit integers"""
    draws = rng.integers(0, 2 ** _UNIFORM_BITS, size=size, dtype=np.int64)
    return (draws + 0.5) / _UNIFORM_SCALE


def standard_normal(rng: np.random.Generator, size: int) -> np.ndarray:
    return ndtri(uniform(rng, size))


def bernoulli(rng: np.random.Generator, prob, size: int) -> np.ndarray:
    return (uniform(rng, size) < prob).astype(float)


def _nuisance(spec: SimSpec, defaults: dict, name: str):
    value = getattr(spec, name)
    return defaults[name] if value is None else value


def _scalar(value, name: str) -> float:
    if isinstance(value, (list, tuple)):
        if len(value) != 1:
            raise InvalidConfig(f"{name} must be a scalar for this scenario")
        value = value[0]
    return float(value)


def _covariate_weights(value, expected: int, name: str) -> np.ndarray:
    weights = np.asarray(value, dtype=float)
    if weights.shape != (expected,):
        raise InvalidConfig(f"{name} needs {expected} entries, got {weights.size}")
    return weights


def case_vectors(case: int, n_mediators: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    (alpha_S, beta_M) of a multivariate null case 1-7

    Cases 4-7 split the mediators into halves and need an even J.
    """
    j = n_mediators
    ones, zeros = np.ones(j), np.zeros(j)
    if case == 1:
        return zeros, zeros
    if case == 2:
        return ones, zeros
    if case == 3:
        return zeros, ones
    if j % 2:
        raise InvalidConfig(f"Case {case} needs an even number of mediators, got {j}")
    half = j // 2
    first = np.concatenate([np.ones(half), np.zeros(half)])
    second = np.concatenate([np.zeros(half), np.ones(half)])
    signed = np.concatenate([np.ones(half), -np.ones(half)])
    presets = {4: (first, second), 5: (second, first), 6: (ones, signed), 7: (signed, ones)}
    if case not in presets:
        raise InvalidConfig(f"Unknown multivariate case {case}")
    return presets[case]


def _linear_covariates(rng: np.random.Generator, n: int, x1_sd: float) -> np.ndarray:
    x1 = x1_sd * standard_normal(rng, n)
    x2 = bernoulli(rng, 0.5, n)
    return np.column_stack([x1, x2])


def gen_linear_sem(spec: SimSpec, rng: np.random.Generator,
                   coefficients: Optional[Tuple[float, float]] = None) -> Dataset:
    """
    M = a_I + a_S S + a_X X + e_M,  Y = b_I + b_M M + b_X X + t_S S + e_Y

    S ~ Bernoulli(0.5), X1 ~ N(0, x1_sd^2), X2 ~ Bernoulli(0.5).

    Args:
        spec: study settings (scenario "linear")
        rng: generator consumed in the order S, X1, X2, e_M, e_Y
        coefficients: optional (alpha_S, beta_M) overriding the spec

    Returns:
        Dataset with covariates (intercept, X1, X2)
    """
    d = LINEAR_DEFAULTS
    alpha_s, beta_m = coefficients or (_scalar(spec.alpha_s, "alpha_s"), _scalar(spec.beta_m, "beta_m"))
    n = spec.n

    s = bernoulli(rng, 0.5, n)
    x = _linear_covariates(rng, n, _nuisance(spec, d, "x1_sd"))
    e_m = _nuisance(spec, d, "sigma_m") * standard_normal(rng, n)
    e_y = _nuisance(spec, d, "sigma_y") * standard_normal(rng, n)

    alpha_x = _covariate_weights(_nuisance(spec, d, "alpha_x"), 2, "alpha_x")
    beta_x = _covariate_weights(_nuisance(spec, d, "beta_x"), 2, "beta_x")
    m = _nuisance(spec, d, "alpha_i") + alpha_s * s + x @ alpha_x + e_m
    y = (_nuisance(spec, d, "beta_i") + beta_m * m + x @ beta_x
         + _nuisance(spec, d, "tau_s") * s + e_y)
    return Dataset.from_arrays(s, m, y, x, covariate_names=("X1", "X2"))


def multi_coefficients(spec: SimSpec) -> Tuple[np.ndarray, np.ndarray]:
    """alpha_S and beta_M vectors from the case preset or the spec values"""
    j = spec.n_mediators
    if spec.case is not None:
        return case_vectors(spec.case, j)
    alpha = np.broadcast_to(np.asarray(spec.alpha_s, dtype=float), (j,)).copy()
    beta = np.broadcast_to(np.asarray(spec.beta_m, dtype=float), (j,)).copy()
    return alpha, beta


def gen_multi_sem(spec: SimSpec, rng: np.random.Generator,
                  coefficients: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Dataset:
    """
    J mediator equations sharing the nuisance coefficients, one outcome equation

    Args:
        spec: study settings (scenario "multi")
        rng: generator consumed in the order S, X1, X2, e_M (n x J), e_Y
        coefficients: optional (alpha_S, beta_M) vectors overriding the spec

    Returns:
        Dataset with J mediator columns
    """
    d = MULTI_DEFAULTS
    alpha, beta = coefficients if coefficients is not None else multi_coefficients(spec)
    n, j = spec.n, alpha.shape[0]

    s = bernoulli(rng, 0.5, n)
    x = _linear_covariates(rng, n, _nuisance(spec, d, "x1_sd"))
    e_m = _nuisance(spec, d, "sigma_m") * standard_normal(rng, n * j).reshape(n, j)
    e_y = _nuisance(spec, d, "sigma_y") * standard_normal(rng, n)

    alpha_x = _covariate_weights(_nuisance(spec, d, "alpha_x"), 2, "alpha_x")
    beta_x = _covariate_weights(_nuisance(spec, d, "beta_x"), 2, "beta_x")
    m = (_nuisance(spec, d, "alpha_i") + np.outer(s, alpha) + (x @ alpha_x)[:, None] + e_m)
    y = (_nuisance(spec, d, "beta_i") + m @ beta + x @ beta_x
         + _nuisance(spec, d, "tau_s") * s + e_y)
    return Dataset.from_arrays(s, m, y, x, covariate_names=("X1", "X2"))


def gen_glm_dataset(spec: SimSpec, rng: np.random.Generator,
                    coefficients: Optional[Tuple[float, float]] = None) -> Dataset:
    """
    Binary mediator with a logistic mean; binary (glm1) or linear (glm2) outcome

    S, X ~ Bernoulli(0.5); E(M) = g(a_S S + a_I + a_X X).
    glm1: E(Y) = g(b_M M + b_I + b_X X + t_S S).
    glm2: Y = b_M M + b_I + b_X X + t_S S + e_Y with e_Y ~ N(0, sigma_y^2).

    Args:
        spec: study settings (scenario "glm1" or "glm2")
        rng: generator consumed in the order S, X, M, Y
        coefficients: optional (alpha_S, beta_M) overriding the spec

    Returns:
        Dataset with covariates (intercept, X)
    """
    if spec.scenario not in ("glm1", "glm2"):
        raise InvalidConfig(f"gen_glm_dataset needs scenario glm1 or glm2, got {spec.scenario}")
    d = GLM_DEFAULTS
    alpha_s, beta_m = coefficients or (_scalar(spec.alpha_s, "alpha_s"), _scalar(spec.beta_m, "beta_m"))
    n = spec.n
    alpha_x = _covariate_weights(_nuisance(spec, d, "alpha_x"), 1, "alpha_x")[0]
    beta_x = _covariate_weights(_nuisance(spec, d, "beta_x"), 1, "beta_x")[0]
    tau = _nuisance(spec, d, "tau_s")

    s = bernoulli(rng, 0.5, n)
    x = bernoulli(rng, 0.5, n)
    m = bernoulli(rng, expit(alpha_s * s + _nuisance(spec, d, "alpha_i") + alpha_x * x), n)
    mean_y = beta_m * m + _nuisance(spec, d, "beta_i") + beta_x * x + tau * s
    if spec.scenario == "glm1":
        y = bernoulli(rng, expit(mean_y), n)
    else:
        y = mean_y + _nuisance(spec, d, "sigma_y") * standard_normal(rng, n)
    return Dataset.from_arrays(s, m, y, x, covariate_names=("X",))


def generate(spec: SimSpec, rng: np.random.Generator, coefficients=None) -> Dataset:
    """Dispatch on spec.scenario"""
    if spec.scenario == "linear":
        return gen_linear_sem(spec, rng, coefficients)
    if spec.scenario == "multi":
        return gen_multi_sem(spec, rng, coefficients)
    return gen_glm_dataset(spec, rng, coefficients)
