"""
Double-Bootstrap Tuning for medboot
Residual-projected datasets that force a zero coefficient, the two-layer
bootstrap that turns a dataset into a sample of p-values, lambda selection
and the confirmatory pattern classifier
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.api.models import AbConfig
from src.data_processing.dataset import Dataset
from src.exceptions import GridExhausted, InputError, MedbootError
from src.models.js_ab import adaptive_js_test
from src.models.poc_ab import adaptive_poc_test
from src.models.regression import fwl_project
from src.models.resampling import (
    derive_seed,
    derive_substream,
    draw_child_seed,
    draw_pair_indices,
    ks_uniform_test,
    parallel_map,
)

logger = logging.getLogger(__name__)

PROCESSING_MODES = ("alpha", "beta", "both")
DB_METHODS = {"poc": adaptive_poc_test, "js": adaptive_js_test}

DEFAULT_GRID = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
DEFAULT_OUTER = 500
DEFAULT_INNER = 500

BOTH_ZERO = "both-zero evidence"
ALPHA_ZERO = "alpha-zero evidence"
BETA_ZERO = "beta-zero evidence"
ALTERNATIVE = "alternative evidence"
INCONCLUSIVE = "inconclusive"

DEGENERATE_TAG = "degenerate case"
NON_DEGENERATE_TAG = "non-degenerate case"


@dataclass(frozen=True)
class TuningCriteria:
    """
    Numeric reading of the p-value sample shapes

    Conservative: fewer than `conservative_fraction` of p-values fall below
    `conservative_omega`. Uniform: the KS test against U[0, 1] has p-value
    at least `ks_level`.
    """
    ks_level: float = 0.01
    conservative_omega: float = 0.05
    conservative_fraction: float = 0.025
    default_lambda: float = 2.0

    @classmethod
    def from_config(cls, tuning_config: Optional[Dict] = None) -> "TuningCriteria":
        tuning_config = tuning_config or {}
        names = ("ks_level", "conservative_omega", "conservative_fraction", "default_lambda")
        return cls(**{k: float(tuning_config[k]) for k in names if k in tuning_config})


@dataclass(frozen=True, eq=False)
class ProcessedDataset:
    """A dataset with its residual-projection mode (alpha, beta or both)"""
    mode: str
    data: Dataset


def _project_columns(values: np.ndarray, basis: np.ndarray) -> np.ndarray:
    projected, _ = fwl_project(values, basis)
    return projected


def residual_project(dataset: Dataset, mode: str) -> ProcessedDataset:
    """
    Replace columns by their projections so a refit returns a zero coefficient

    alpha: (M, X) projected orthogonal to S, so the mediator model gives alpha_S = 0.
    beta: the outcome model's (Y, S, X) projected orthogonal to M, so it gives
    beta_M = 0; the mediator model keeps its S and X and so its alpha_S.
    both: alpha, then beta on the result.

    Args:
        dataset: original (or already processed) data
        mode: "alpha", "beta" or "both"

    Returns:
        ProcessedDataset
    """
    if isinstance(dataset, ProcessedDataset):
        dataset = dataset.data
    if mode not in PROCESSING_MODES:
        raise InputError(f"Unknown processing mode '{mode}', expected one of {PROCESSING_MODES}")

    data = dataset
    if mode in ("alpha", "both"):
        s = data.exposure
        data = replace(
            data,
            mediators=_project_columns(data.mediators, s),
            covariates=_project_columns(data.covariates, s),
        )
    if mode in ("beta", "both"):
        m = data.mediators
        data = replace(
            data,
            outcome=_project_columns(data.outcome, m),
            outcome_exposure=_project_columns(data.outcome_model_exposure, m),
            outcome_covariates=_project_columns(data.outcome_model_covariates, m),
        )

    logger.debug(f"Processed {dataset.n} rows with mode={mode}")
    return ProcessedDataset(mode=mode, data=data)


@dataclass(frozen=True, eq=False)
class PValueSample:
    """
    Double-bootstrap p-values plus the shape summaries used for decisions
    """
    pvalues: np.ndarray
    lam: float
    method: str
    missing: int = 0

    @property
    def size(self) -> int:
        return self.pvalues.shape[0]

    def fraction_below(self, omega: float) -> float:
        if self.size == 0:
            return float("nan")
        return float(np.mean(self.pvalues < omega))

    def ks(self):
        return ks_uniform_test(self.pvalues)

    def is_conservative(self, criteria: TuningCriteria) -> bool:
        return self.fraction_below(criteria.conservative_omega) < criteria.conservative_fraction

    def is_uniform(self, criteria: TuningCriteria) -> bool:
        return float(self.ks().pvalue) >= criteria.ks_level

    def bends_upward(self, criteria: TuningCriteria) -> bool:
        """Too many small p-values: KS fails and the rejection rate exceeds omega"""
        return (not self.is_uniform(criteria)
                and self.fraction_below(criteria.conservative_omega) > criteria.conservative_omega)

    def summary(self, criteria: TuningCriteria) -> Dict[str, float]:
        ks = self.ks()
        return {
            "lam": self.lam,
            "size": float(self.size),
            "missing": float(self.missing),
            "ks_distance": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue),
            "fraction_below": self.fraction_below(criteria.conservative_omega),
            "conservative": float(self.is_conservative(criteria)),
            "uniform": float(self.is_uniform(criteria)),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"replicate": np.arange(self.size), "p_value": self.pvalues})


def _inner_config(base: AbConfig, lam: float, b_inner: int, seed: int) -> AbConfig:
    config = base.model_copy(update={"lam": float(lam), "lam_alpha": None, "lam_beta": None})
    return config.with_bootstrap(b=b_inner, seed=seed, workers=1)


def double_bootstrap(dataset, lam: float, b_outer: int = DEFAULT_OUTER, b_inner: int = DEFAULT_INNER,
                     seed: int = 20240101, method: str = "poc", config: AbConfig = None,
                     workers: Optional[int] = None) -> PValueSample:
    """
    Outer pairs bootstrap; each resample gets a full inner adaptive test

    Outer replicate r draws its row indices and then its inner seed from
    derive_substream(seed, r). A replicate whose inner test fails is retried
    once with fresh draws from the same stream, then recorded as missing.

    Args:
        dataset: Dataset or ProcessedDataset (single mediator)
        lam: tuning constant for the inner tests
        b_outer: number of outer resamples
        b_inner: replicates per inner test
        seed: master seed
        method: "poc" or "js"
        config: base test settings (local parameters, scheme, omega grid)
        workers: threads across outer replicates

    Returns:
        PValueSample with missing replicates excluded
    """
    if isinstance(dataset, ProcessedDataset):
        dataset = dataset.data
    if b_outer < 1 or b_inner < 1:
        raise InputError("b_outer and b_inner must be at least 1")
    if method not in DB_METHODS:
        raise InputError(f"Unknown double-bootstrap method '{method}', expected one of {tuple(DB_METHODS)}")
    test = DB_METHODS[method]
    base = config or AbConfig()

    def outer(r: int) -> Optional[float]:
        rng = derive_substream(seed, r)
        for attempt in range(2):
            indices = draw_pair_indices(dataset.n, rng)
            inner_seed = draw_child_seed(rng)
            try:
                result = test(dataset.take(indices), _inner_config(base, lam, b_inner, inner_seed))
                return result.p_value
            except MedbootError as e:
                logger.debug(f"Outer replicate {r} attempt {attempt + 1} failed: {e}")
        return None

    outcomes = parallel_map(outer, range(b_outer), workers)
    pvalues = np.array([p for p in outcomes if p is not None], dtype=float)
    missing = b_outer - pvalues.shape[0]
    if missing:
        logger.warning(f"{missing} of {b_outer} outer replicates failed twice and were dropped")
    if pvalues.shape[0] == 0:
        raise GridExhausted("Every outer replicate failed; no p-values to assess")
    return PValueSample(pvalues=pvalues, lam=float(lam), method=method, missing=missing)


@dataclass
class LambdaSelection:
    """Outcome of select_lambda with every p-value sample it looked at"""
    lam: float
    tag: str
    samples: Dict[str, PValueSample] = field(default_factory=dict)
    diagnostics: List[Dict[str, float]] = field(default_factory=list)


def _check_grid(grid: Sequence[float]) -> List[float]:
    grid = [float(v) for v in grid]
    if not grid:
        raise InputError("Lambda grid must not be empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError(f"Lambda grid must be strictly ascending, got {grid}")
    if grid[0] < 0:
        raise InputError("Lambda grid values must be non-negative")
    return grid


def select_lambda(dataset: Dataset, grid: Sequence[float] = DEFAULT_GRID, b_outer: int = DEFAULT_OUTER,
                  b_inner: int = DEFAULT_INNER, seed: int = 20240101, method: str = "poc",
                  config: AbConfig = None, criteria: TuningCriteria = None,
                  workers: Optional[int] = None) -> LambdaSelection:
    """
    Choose lambda by the double bootstrap

    Both alpha- and beta-processed samples at lambda = 0 conservative: scan
    the grid on the doubly-processed data and return the first lambda whose
    p-values pass the KS check. Otherwise return the default lambda.

    Args:
        dataset: single-mediator data
        grid: ascending candidate lambdas
        b_outer: outer resamples
        b_inner: inner replicates
        seed: master seed
        method: "poc" or "js"
        config: base test settings
        criteria: conservative / uniform rules
        workers: threads across outer replicates

    Returns:
        LambdaSelection
    """
    grid = _check_grid(grid)
    criteria = criteria or TuningCriteria()

    logger.info("=" * 60)
    logger.info(f"LAMBDA SELECTION ({method}, n={dataset.n}, grid={grid})")
    logger.info("=" * 60)

    samples = {}
    for k, mode in enumerate(("alpha", "beta")):
        processed = residual_project(dataset, mode)
        samples[mode] = double_bootstrap(
            processed, 0.0, b_outer, b_inner, derive_seed(seed, 2, k), method, config, workers
        )
        logger.info(f"D_{mode} at lambda=0: {samples[mode].summary(criteria)}")

    diagnostics = [dict(samples[mode].summary(criteria), data=i) for i, mode in enumerate(("alpha", "beta"))]
    if not (samples["alpha"].is_conservative(criteria) and samples["beta"].is_conservative(criteria)):
        logger.info(f"At least one processed sample is non-conservative; using lambda={criteria.default_lambda}")
        return LambdaSelection(
            lam=criteria.default_lambda, tag=NON_DEGENERATE_TAG, samples=samples, diagnostics=diagnostics
        )

    both = residual_project(dataset, "both")
    for k, lam in enumerate(grid):
        sample = double_bootstrap(both, lam, b_outer, b_inner, derive_seed(seed, 3, k), method, config, workers)
        samples[f"both@{lam:g}"] = sample
        summary = sample.summary(criteria)
        diagnostics.append(dict(summary, data=2))
        logger.info(f"D_alpha,beta at lambda={lam:g}: KS={summary['ks_distance']:.4f} "
                    f"(p={summary['ks_pvalue']:.4f})")
        if sample.is_uniform(criteria):
            logger.info(f"Selected lambda={lam:g}")
            return LambdaSelection(lam=lam, tag=DEGENERATE_TAG, samples=samples, diagnostics=diagnostics)

    raise GridExhausted(f"No lambda in {grid} gave uniform p-values on the doubly-processed data")


@dataclass
class ConfirmatoryResult:
    """Pattern label and the three p-value samples behind it"""
    label: str
    samples: Dict[str, PValueSample]
    summaries: Dict[str, Dict[str, float]]


def classify_pattern(observed: PValueSample, alpha: PValueSample, beta: PValueSample,
                     criteria: TuningCriteria = None) -> str:
    """
    Map the shapes of the three samples to an evidence label

    all conservative -> both-zero; observed bends upward with both processed
    samples uniform -> alternative; observed and one processed sample uniform
    with the other conservative -> single-zero.
    """
    criteria = criteria or TuningCriteria()
    alpha_c = alpha.is_conservative(criteria)
    beta_c = beta.is_conservative(criteria)
    obs_u = observed.is_uniform(criteria)
    alpha_u = alpha.is_uniform(criteria)
    beta_u = beta.is_uniform(criteria)

    if observed.is_conservative(criteria) and alpha_c and beta_c:
        return BOTH_ZERO
    if observed.bends_upward(criteria) and alpha_u and beta_u:
        return ALTERNATIVE
    if obs_u and alpha_u and beta_c:
        return ALPHA_ZERO
    if obs_u and beta_u and alpha_c:
        return BETA_ZERO
    return INCONCLUSIVE


def confirmatory_analysis(dataset: Dataset, lam: float = 0.0, b_outer: int = DEFAULT_OUTER,
                          b_inner: int = DEFAULT_INNER, seed: int = 20240101, method: str = "poc",
                          config: AbConfig = None, criteria: TuningCriteria = None,
                          workers: Optional[int] = None) -> ConfirmatoryResult:
    """
    Double-bootstrap p-value samples on the observed, alpha- and beta-processed data

    The label is evidence about which coefficient is zero, not a verdict.

    Returns:
        ConfirmatoryResult with samples keyed "obs", "alpha", "beta"
    """
    if isinstance(dataset, ProcessedDataset):
        dataset = dataset.data
    criteria = criteria or TuningCriteria()

    logger.info("=" * 60)
    logger.info(f"CONFIRMATORY ANALYSIS ({method}, lambda={lam:g})")
    logger.info("=" * 60)

    inputs = {
        "obs": dataset,
        "alpha": residual_project(dataset, "alpha").data,
        "beta": residual_project(dataset, "beta").data,
    }
    samples = {}
    for k, (name, data) in enumerate(inputs.items()):
        samples[name] = double_bootstrap(data, lam, b_outer, b_inner, derive_seed(seed, 4, k),
                                         method, config, workers)

    label = classify_pattern(samples["obs"], samples["alpha"], samples["beta"], criteria)
    summaries = {name: sample.summary(criteria) for name, sample in samples.items()}
    logger.info(f"Pattern: {label}")
    return ConfirmatoryResult(label=label, samples=samples, summaries=summaries)
