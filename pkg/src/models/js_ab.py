"""
Joint-Significance Tests
MaxP, the classical bootstrap of the smaller-|t| statistic, and its
adaptive bootstrap version
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import stats

from src.api.models import AbConfig, TestResult
from src.data_processing.dataset import Dataset
from src.models.adaptive import ReplicateDraw, indicator, scalar_local, summarize, thresholds
from src.models.poc_ab import PocComponents, poc_components, replicate_stats
from src.models.resampling import draw_pair_indices, run_replicates

logger = logging.getLogger(__name__)


def h_select(t1: float, t2: float) -> Tuple[int, int]:
    """(1, 0) when |t1| <= |t2|, else (0, 1); ties pick the first argument"""
    return (1, 0) if abs(t1) <= abs(t2) else (0, 1)


def h_value(t1: float, t2: float) -> float:
    """H(t1, t2): whichever argument has the smaller absolute value, sign kept"""
    first, second = h_select(t1, t2)
    return first * t1 + second * t2


@dataclass(frozen=True, eq=False)
class JsComponents:
    t_alpha: float
    t_beta: float
    theta_scaled: float
    selector: Tuple[int, int]
    poc: PocComponents

    @property
    def selected(self) -> str:
        """Coefficient carrying the smaller |t|"""
        return "alpha" if self.selector[0] else "beta"


def js_components(dataset: Dataset) -> JsComponents:
    poc = poc_components(dataset)
    selector = h_select(poc.t_alpha, poc.t_beta)
    return JsComponents(
        t_alpha=poc.t_alpha,
        t_beta=poc.t_beta,
        theta_scaled=selector[0] * poc.t_alpha + selector[1] * poc.t_beta,
        selector=selector,
        poc=poc,
    )


def maxp_statistic(t_alpha: float, t_beta: float) -> float:
    """max of the two two-sided normal p-values"""
    p_alpha = 2 * stats.norm.sf(abs(t_alpha))
    p_beta = 2 * stats.norm.sf(abs(t_beta))
    return float(max(p_alpha, p_beta))


def maxp_test(components: JsComponents, config: AbConfig = None) -> TestResult:
    config = config or AbConfig()
    p_value = maxp_statistic(components.t_alpha, components.t_beta)
    return TestResult(
        method="js-maxp",
        estimate=components.poc.estimate,
        statistic=components.theta_scaled,
        p_value=max(p_value, np.finfo(float).tiny),
        n=components.poc.n,
        decisions={f"{w:g}": p_value < w for w in config.omega_grid},
        config=config,
    )


def js_boot_replicate(dataset: Dataset, indices: np.ndarray, components: JsComponents,
                      config: AbConfig) -> ReplicateDraw:
    """
    Classical delta H(T*) - H(T), local term H(K*_S, K*_M) - H(b_a/s_a, b_b/s_b)

    K*_S = (b_alpha + Z*_S) / sigma*_alpha and K*_M = (b_beta + Z*_M) / sigma*_beta.
    """
    poc = components.poc
    stats_star = replicate_stats(dataset, indices, poc, config.bootstrap.scheme)
    b_alpha = scalar_local(config.b_alpha, "b_alpha")
    b_beta = scalar_local(config.b_beta, "b_beta")
    lam_alpha, lam_beta = thresholds(config, poc.n)

    classical = h_value(stats_star.t_alpha, stats_star.t_beta) - components.theta_scaled
    k_s = (b_alpha + stats_star.z_s) / stats_star.sigma_alpha
    k_m = (b_beta + stats_star.z_m) / stats_star.sigma_beta
    centre = h_value(b_alpha / poc.sigma_alpha, b_beta / poc.sigma_beta)
    local = h_value(k_s, k_m) - centre

    return ReplicateDraw(
        classical=classical,
        local=local,
        indicator_alpha=indicator(stats_star.t_alpha, poc.t_alpha, lam_alpha),
        indicator_beta=indicator(stats_star.t_beta, poc.t_beta, lam_beta),
    )


def adaptive_js_test(dataset: Dataset, config: AbConfig = None, method: str = None,
                     return_distribution: bool = False):
    """
    Adaptive bootstrap joint-significance test on the sqrt(n) scale

    U2* = classical delta (1 - I) + local term * I, compared with
    sqrt(n) theta_hat = H(T_alpha, T_beta). Zero thresholds give "js-b".
    """
    config = config or AbConfig()
    components = js_components(dataset)
    lam_alpha, lam_beta = thresholds(config, dataset.n)
    if method is None:
        method = "js-ab" if (lam_alpha > 0 or lam_beta > 0) else "js-b"
    logger.debug(f"{method}: H picks {components.selected} (|t|={abs(components.theta_scaled):.3f})")

    def replicate(rng):
        indices = draw_pair_indices(dataset.n, rng)
        return js_boot_replicate(dataset, indices, components, config)

    draws, redraws = run_replicates(replicate, config.bootstrap)
    return summarize(
        method=method,
        draws=draws,
        observed=components.theta_scaled,
        estimate=components.poc.estimate,
        n=dataset.n,
        config=config,
        local_scale=1.0,
        redraws=redraws,
        diagnostics={
            "t_alpha": components.t_alpha,
            "t_beta": components.t_beta,
            "selects_alpha": float(components.selector[0]),
            "lambda_n_alpha": lam_alpha,
            "lambda_n_beta": lam_beta,
        },
        return_distribution=return_distribution,
    )


def classical_js_test(dataset: Dataset, config: AbConfig = None, return_distribution: bool = False):
    config = (config or AbConfig()).classical()
    return adaptive_js_test(dataset, config, method="js-b", return_distribution=return_distribution)
