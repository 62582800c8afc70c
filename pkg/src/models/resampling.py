"""
Resampling Engine for medboot
Counter-based substreams, pairs/projected bootstrap replicates run in
parallel, and the quantile / p-value conventions used by every test
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import pandas as pd
from scipy import stats

from src.api.models import BootstrapConfig
from src.config import default_workers
from src.exceptions import DegenerateResampling, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP_SIZE = 500
MAX_REDRAWS = 100
_MASK64 = (1 << 64) - 1

T = TypeVar("T")


def derive_substream(master_seed: int, replicate_index: int) -> np.random.Generator:
    """
    Independent generator for one replicate

    Philox is keyed with the 128-bit value (replicate_index, master_seed), so
    each (seed, index) pair owns its own counter space.

    Args:
        master_seed: 64-bit master seed
        replicate_index: non-negative replicate number (< 2**64)

    Returns:
        numpy Generator
    """
    if replicate_index < 0 or replicate_index > _MASK64:
        raise ValueError(f"replicate_index must be in [0, 2**64), got {replicate_index}")
    key = (int(master_seed) & _MASK64) | (int(replicate_index) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master_seed: int, *path: int) -> int:
    """Child 64-bit seed for a named sub-task, e.g. (rep, method index)"""
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))
    return int(sequence.generate_state(1, np.uint64)[0])


def draw_child_seed(rng: np.random.Generator) -> int:
    """64-bit seed drawn from an existing stream"""
    return int(rng.integers(0, 2 ** 63, dtype=np.int64))


def draw_pair_indices(n: int, rng: np.random.Generator) -> np.ndarray:
    """Row indices of a pairs bootstrap resample, uniform with replacement"""
    if n < 1:
        raise ValueError("n must be at least 1")
    return rng.integers(0, n, size=n)


@dataclass(frozen=True, eq=False)
class BootstrapDistribution:
    """
    Sorted bootstrap draws with provenance
    """
    samples: np.ndarray
    method: str
    config: BootstrapConfig
    redraws: int = 0

    def __post_init__(self):
        samples = np.sort(np.asarray(self.samples, dtype=float))
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def b(self) -> int:
        return self.samples.shape[0]

    def quantile(self, p: float) -> float:
        return empirical_quantile(self, p)

    def pvalue(self, observed: float) -> float:
        return two_sided_pvalue(self, observed)

    def to_csv(self, path: str) -> None:
        """One-column CSV of the sorted draws"""
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({self.method: self.samples}).to_csv(path, index=False)
        logger.info(f"Saved {self.b} bootstrap draws to {path}")


def _samples(distribution) -> np.ndarray:
    if isinstance(distribution, BootstrapDistribution):
        return distribution.samples
    return np.sort(np.asarray(distribution, dtype=float))


def empirical_quantile(distribution, p: float) -> float:
    """
    The ceil(p*B)-th smallest draw, with the rank clamped to [1, B]
    """
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    samples = _samples(distribution)
    b = samples.shape[0]
    # rounding guards products like 0.05 * 100 that land a hair above an integer
    rank = math.ceil(round(p * b, 9))
    rank = min(max(rank, 1), b)
    return float(samples[rank - 1])


def two_sided_pvalue(distribution, observed: float) -> float:
    """
    p = min(1, 2 * min(1 + #{u <= t}, 1 + #{u >= t}) / (B + 1))
    """
    samples = _samples(distribution)
    b = samples.shape[0]
    if b == 0:
        raise ValueError("Bootstrap distribution is empty")
    below = int(np.searchsorted(samples, observed, side="right"))
    above = b - int(np.searchsorted(samples, observed, side="left"))
    return min(1.0, 2.0 * min(1 + below, 1 + above) / (b + 1))


def ks_uniform_distance(pvalues: Sequence[float]) -> float:
    """Kolmogorov-Smirnov distance between the p-value sample and U[0, 1]"""
    return float(ks_uniform_test(pvalues).statistic)


def ks_uniform_test(pvalues: Sequence[float]):
    values = np.asarray(pvalues, dtype=float)
    if values.size == 0:
        raise ValueError("p-value sample is empty")
    if np.any((values < 0) | (values > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    return stats.kstest(values, "uniform")


def parallel_map(func: Callable[[int], T], indices: Sequence[int],
                 workers: Optional[int] = None) -> List[T]:
    """
    Apply `func` to each index, in threads when workers > 1

    Output order always follows `indices`.
    """
    workers = workers or default_workers()
    indices = list(indices)
    if workers <= 1 or len(indices) <= 1:
        return [func(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, indices))


def run_replicates(replicate: Callable[[np.random.Generator], T],
                   config: BootstrapConfig) -> Tuple[List[T], int]:
    """
    Run B replicates; replicate r consumes only derive_substream(seed, r)

    A replicate raising NumericalError is redrawn from the same stream up to
    MAX_REDRAWS times before the whole run aborts with DegenerateResampling.

    Args:
        replicate: callable taking the replicate's generator
        config: bootstrap settings

    Returns:
        Tuple of (replicate outputs in replicate order, number of redraws)
    """
    redraw_counts = [0] * config.b

    def one(r: int):
        rng = derive_substream(config.seed, r)
        last_error = None
        for attempt in range(MAX_REDRAWS):
            try:
                return replicate(rng)
            except NumericalError as e:
                last_error = e
                redraw_counts[r] = attempt + 1
        raise DegenerateResampling(r, MAX_REDRAWS, last_error)

    results = parallel_map(one, range(config.b), config.workers)
    total = sum(redraw_counts)
    if total:
        logger.debug(f"{total} degenerate replicate(s) redrawn")
    return results, total
