"""
Shared pieces of the adaptive bootstrap tests: the lambda_n threshold,
pre-test indicators, per-replicate draws and the final TestResult
"""

import logging
import math
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.api.models import AbConfig, TestResult
from src.exceptions import InputError
from src.models.resampling import BootstrapDistribution, empirical_quantile, two_sided_pvalue

logger = logging.getLogger(__name__)


def lambda_n(lam: float, n: int) -> float:
    """Indicator threshold lam * sqrt(n) / ln(n)"""
    if n < 2:
        raise InputError("lambda_n needs n >= 2")
    return lam * math.sqrt(n) / math.log(n)


def thresholds(config: AbConfig, n: int) -> Tuple[float, float]:
    """(lambda_n for alpha, lambda_n for beta), honouring per-coefficient overrides"""
    lam_alpha = config.lam if config.lam_alpha is None else config.lam_alpha
    lam_beta = config.lam if config.lam_beta is None else config.lam_beta
    return lambda_n(lam_alpha, n), lambda_n(lam_beta, n)


def indicator(t_star: float, t_observed: float, threshold: float) -> bool:
    """1{|T*| <= lambda_n and |T| <= lambda_n}; a zero threshold switches it off"""
    return threshold > 0 and abs(t_star) <= threshold and abs(t_observed) <= threshold


def scalar_local(value, name: str) -> float:
    """Single-coefficient local parameter from a float or a length-1 list"""
    if isinstance(value, (list, tuple)):
        if len(value) != 1:
            raise InputError(f"{name} must be a scalar for single-mediator tests")
        value = value[0]
    return float(value)


def vector_local(value, length: int, name: str) -> np.ndarray:
    array = np.atleast_1d(np.asarray(value, dtype=float))
    if array.size == 1:
        return np.full(length, float(array[0]))
    if array.size != length:
        raise InputError(f"{name} has {array.size} entries, expected {length}")
    return array


class ReplicateDraw(NamedTuple):
    """One replicate's classical delta, local term and indicator pair"""
    classical: float
    local: float
    indicator_alpha: bool
    indicator_beta: bool

    @property
    def local_branch(self) -> bool:
        return self.indicator_alpha and self.indicator_beta

    def value(self, local_scale: float = 1.0) -> float:
        """classical * (1 - I) + local_scale * local * I"""
        if self.local_branch:
            return local_scale * self.local
        return self.classical


def interval_decisions(distribution: BootstrapDistribution, observed: float,
                       omega_grid: Sequence[float]) -> Tuple[Dict[str, bool], Dict[str, Tuple[float, float]]]:
    """Reject at omega when the observed statistic falls outside (q_{omega/2}, q_{1-omega/2})"""
    decisions, intervals = {}, {}
    for omega in omega_grid:
        lower = empirical_quantile(distribution, omega / 2)
        upper = empirical_quantile(distribution, 1 - omega / 2)
        key = f"{omega:g}"
        intervals[key] = (lower, upper)
        decisions[key] = bool(observed < lower or observed > upper)
    return decisions, intervals


def summarize(method: str, draws: List[ReplicateDraw], observed: float, estimate: float,
              n: int, config: AbConfig, local_scale: float, redraws: int = 0,
              diagnostics: Optional[Dict[str, float]] = None, target: Optional[str] = None,
              return_distribution: bool = False):
    """
    Turn replicate draws into a TestResult

    Args:
        method: method tag
        draws: one ReplicateDraw per replicate
        observed: statistic compared against the draws
        estimate: point estimate reported alongside
        n: sample size
        config: test settings (echoed)
        local_scale: weight of the local term (1/n or 1)
        redraws: degenerate replicates redrawn
        diagnostics: extra numbers to report
        target: mediator label, if any
        return_distribution: also return the BootstrapDistribution

    Returns:
        TestResult, or (TestResult, BootstrapDistribution)
    """
    distribution = BootstrapDistribution(
        samples=[draw.value(local_scale) for draw in draws],
        method=method,
        config=config.bootstrap,
        redraws=redraws,
    )
    p_value = two_sided_pvalue(distribution, observed)
    decisions, intervals = interval_decisions(distribution, observed, config.omega_grid)
    indicator_rate = float(np.mean([draw.local_branch for draw in draws]))

    details = {"redraws": float(redraws)}
    details.update(diagnostics or {})
    result = TestResult(
        method=method,
        estimate=float(estimate),
        statistic=float(observed),
        p_value=p_value,
        n=n,
        indicator_rate=indicator_rate,
        decisions=decisions,
        intervals=intervals,
        target=target,
        config=config,
        diagnostics=details,
    )
    logger.debug(f"{method}: p={p_value:.4f}, indicator rate={indicator_rate:.3f}")
    if return_distribution:
        return result, distribution
    return result
