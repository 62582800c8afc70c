"""
Analysis Pipeline for medboot
Method dispatch, Benjamini-Hochberg adjustment, the two-step
screen-then-joint pipeline and report assembly
"""

import logging
import math
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from statsmodels.stats.multitest import multipletests

from src import __version__
from src.api.models import (
    METHOD_TAGS,
    SINGLE_MEDIATOR_METHODS,
    AbConfig,
    NieQuery,
    Report,
    ScreeningInfo,
    TestResult,
)
from src.data_processing.dataset import ColumnRoleMap, Dataset
from src.exceptions import InputError
from src.models.glm_ab import adaptive_glm_test, classical_glm_test
from src.models.multi_ab import (
    adaptive_joint_test,
    classical_joint_test,
    individual_within_multi_test,
    single_mediator_test,
)
from src.models.js_ab import adaptive_js_test, classical_js_test, js_components, maxp_test
from src.models.poc_ab import adaptive_poc_test, classical_poc_test, poc_components, sobel_test
from src.models.regression import DEFAULT_MAX_ITER, DEFAULT_TOL
from src.models.resampling import derive_seed, derive_substream

logger = logging.getLogger(__name__)

# seed paths under the screening seed
_SPLIT_PATH = (0,)
_STEP1_PATH = 1
_STEP2_PATH = 2


def run_method(dataset: Dataset, method: str, config: AbConfig = None, query: NieQuery = None,
               return_distribution: bool = False, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL):
    """
    Run one method by tag

    Args:
        dataset: input data (one mediator unless the method is joint-*)
        method: one of METHOD_TAGS
        config: test settings
        query: NIE query for the glm methods
        return_distribution: also return the BootstrapDistribution (None for
            the closed-form tests)
        max_iter: IRLS iteration cap (glm methods)
        tol: IRLS tolerance (glm methods)

    Returns:
        TestResult, or (TestResult, distribution) when requested
    """
    config = config or AbConfig()
    if method not in METHOD_TAGS:
        raise InputError(f"Unknown method '{method}'; choose from {METHOD_TAGS}")
    if not method.startswith("joint") and dataset.n_mediators != 1:
        raise InputError(f"{method} takes one mediator, got {dataset.n_mediators}; use joint-ab or screen")

    if method in ("poc-sobel", "js-maxp"):
        if method == "poc-sobel":
            result = sobel_test(poc_components(dataset), config)
        else:
            result = maxp_test(js_components(dataset), config)
        return (result, None) if return_distribution else result

    query = query or NieQuery()
    dispatch = {
        "poc-ab": lambda: adaptive_poc_test(dataset, config, return_distribution=return_distribution),
        "poc-b": lambda: classical_poc_test(dataset, config, return_distribution=return_distribution),
        "js-ab": lambda: adaptive_js_test(dataset, config, return_distribution=return_distribution),
        "js-b": lambda: classical_js_test(dataset, config, return_distribution=return_distribution),
        "joint-ab": lambda: adaptive_joint_test(dataset, config, return_distribution=return_distribution),
        "joint-b": lambda: classical_joint_test(dataset, config, return_distribution=return_distribution),
        "glm1-ab": lambda: adaptive_glm_test(dataset, "I", query, config,
                                             max_iter=max_iter, tol=tol, return_distribution=return_distribution),
        "glm1-b": lambda: classical_glm_test(dataset, "I", query, config,
                                             max_iter=max_iter, tol=tol, return_distribution=return_distribution),
        "glm2-ab": lambda: adaptive_glm_test(dataset, "II", query, config,
                                             max_iter=max_iter, tol=tol, return_distribution=return_distribution),
        "glm2-b": lambda: classical_glm_test(dataset, "II", query, config,
                                             max_iter=max_iter, tol=tol, return_distribution=return_distribution),
    }
    return dispatch[method]()


def bh_adjust(pvalues: Sequence[float], q: float) -> Tuple[List[bool], List[float]]:
    """
    Benjamini-Hochberg step-up at target FDR q

    Args:
        pvalues: p-values in (0, 1]
        q: target FDR in [0, 1); q = 0 rejects nothing

    Returns:
        Tuple of (rejection flags, adjusted values), both in input order
    """
    p = np.asarray(list(pvalues), dtype=float)
    if not 0 <= q < 1:
        raise InputError(f"FDR level must lie in [0, 1), got {q}")
    if p.size == 0:
        return [], []
    if np.any((p <= 0) | (p > 1)):
        raise InputError("p-values must lie in (0, 1]")

    reject, adjusted, _, _ = multipletests(p, alpha=q if q > 0 else 1.0, method="fdr_bh")
    if q == 0:
        reject = np.zeros_like(reject)
    return [bool(r) for r in reject], [float(a) for a in np.minimum(adjusted, 1.0)]


def _split_rows(n: int, split_fraction: Optional[float], seed: int):
    if split_fraction is None or split_fraction >= 1:
        rows = np.arange(n)
        return rows, rows
    if not 0 < split_fraction < 1:
        raise InputError(f"split_fraction must lie in (0, 1], got {split_fraction}")
    order = derive_substream(derive_seed(seed, *_SPLIT_PATH), 0).permutation(n)
    size_a = int(round(split_fraction * n))
    if size_a < 1 or size_a >= n:
        raise InputError(f"split_fraction {split_fraction} leaves an empty split at n={n}")
    return np.sort(order[:size_a]), np.sort(order[size_a:])


def retain_smallest(pvalues: Dict[str, float], fraction: float) -> List[str]:
    """
    Names with the ceil(fraction * J) smallest p-values; ties at the cutoff are all kept
    """
    if not 0 < fraction <= 1:
        raise InputError(f"screen_fraction must lie in (0, 1], got {fraction}")
    if not pvalues:
        return []
    k = max(1, math.ceil(round(fraction * len(pvalues), 9)))
    cutoff = sorted(pvalues.values())[k - 1]
    return [name for name, p in pvalues.items() if p <= cutoff]


def screen_then_joint(dataset: Dataset, role_map: Optional[ColumnRoleMap] = None, method: str = "poc-ab",
                      screen_fraction: float = 0.1, fdr_q: float = 0.1, config: AbConfig = None,
                      split_fraction: Optional[float] = 0.5) -> Report:
    """
    Marginal screening on split A, then target-within-retained tests on split B with BH

    Args:
        dataset: data with one or more mediators
        role_map: optional role map restricting the mediators screened
        method: single-mediator method tag for both steps
        screen_fraction: share of mediators retained after step 1
        fdr_q: BH target for the step-2 p-values
        config: test settings; its seed drives the split and every test
        split_fraction: share of rows in split A; None or 1 uses all rows for both steps

    Returns:
        Report with one TestResult per retained mediator
    """
    start = time.time()
    config = config or AbConfig()
    if method not in SINGLE_MEDIATOR_METHODS:
        raise InputError(f"Screening needs a single-mediator method; choose from {SINGLE_MEDIATOR_METHODS}")
    if role_map is not None:
        missing = [m for m in role_map.mediators if m not in dataset.mediator_names]
        if missing:
            raise InputError(f"Mediators not in the dataset: {missing}")
        dataset = dataset.select_mediators([dataset.mediator_names.index(m) for m in role_map.mediators])

    seed = config.bootstrap.seed
    rows_a, rows_b = _split_rows(dataset.n, split_fraction, seed)
    split_a, split_b = dataset.take(rows_a), dataset.take(rows_b)

    logger.info("=" * 60)
    logger.info(f"SCREENING: {dataset.n_mediators} mediators, method={method}, "
                f"split {len(rows_a)}/{len(rows_b)}")
    logger.info("=" * 60)

    screened = {}
    for j, name in enumerate(dataset.mediator_names):
        step_config = config.with_bootstrap(seed=derive_seed(seed, _STEP1_PATH, j))
        screened[name] = single_mediator_test(split_a.select_mediators([j]), method, step_config).p_value
    retained = retain_smallest(screened, screen_fraction)
    if not retained:
        raise InputError("Screening retained no mediators")
    logger.info(f"Step 1 retained {len(retained)} of {dataset.n_mediators}: {retained}")

    joint = split_b.select_mediators([dataset.mediator_names.index(m) for m in retained])
    results = []
    for j, name in enumerate(retained):
        step_config = config.with_bootstrap(seed=derive_seed(seed, _STEP2_PATH, j))
        if joint.n_mediators == 1:
            result = single_mediator_test(joint, method, step_config)
            result = result.model_copy(update={"target": name})
        else:
            result = individual_within_multi_test(joint, j, step_config, method)
        results.append(result)

    rejected, q_values = bh_adjust([r.p_value for r in results], fdr_q)
    logger.info(f"Step 2: {sum(rejected)} mediator(s) selected at FDR {fdr_q:g}")

    screening = ScreeningInfo(
        screen_fraction=screen_fraction,
        fdr_q=fdr_q,
        screened=screened,
        retained=retained,
        split_a=[int(i) for i in rows_a] if split_fraction is not None and split_fraction < 1 else None,
        split_b=[int(i) for i in rows_b] if split_fraction is not None and split_fraction < 1 else None,
    )
    return build_report(
        "screen", results, config, start, q_values=q_values, rejected=rejected,
        screening=screening, details={"retained_count": len(retained)},
    )


def build_report(command: str, results: List[TestResult], config: Optional[AbConfig], start_time: float,
                 q_values: Optional[List[float]] = None, rejected: Optional[List[bool]] = None,
                 screening: Optional[ScreeningInfo] = None, details: Optional[Dict] = None) -> Report:
    """Assemble the versioned JSON report"""
    return Report(
        tool_version=__version__,
        command=command,
        results=results,
        q_values=q_values,
        rejected=rejected,
        config=config,
        screening=screening,
        details=details or {},
        wall_time=time.time() - start_time,
    )
