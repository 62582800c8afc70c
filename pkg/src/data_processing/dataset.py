"""
Dataset Module for medboot
Holds exposure, mediator, outcome and covariate columns with declared roles,
and loads them from CSV files
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.exceptions import EmptyFile, InputError, InvalidConfig, MissingColumn, NonNumericCell

logger = logging.getLogger(__name__)

INTERCEPT = "intercept"


@dataclass(frozen=True)
class ColumnRoleMap:
    """
    Column names for each role in a CSV file
    """
    exposure: str
    mediators: Tuple[str, ...]
    outcome: str
    covariates: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mediators", tuple(self.mediators))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.mediators:
            raise InvalidConfig("At least one mediator column is required")
        names = self.columns()
        duplicates = sorted({c for c in names if names.count(c) > 1})
        if duplicates:
            raise InvalidConfig(f"Column roles must be distinct; repeated: {duplicates}")
        if INTERCEPT in names:
            raise InvalidConfig(f"'{INTERCEPT}' is reserved for the injected constant column")

    def columns(self) -> list:
        return [self.exposure, *self.mediators, self.outcome, *self.covariates]


def _as_readonly(values, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if ndim == 2 and array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != ndim:
        raise InputError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InputError(f"{name} contains missing or non-finite values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Exposure S, mediators M (n x J), outcome Y and covariates X (n x p)

    The first covariate column is the intercept slot. Datasets loaded from
    files or built with from_arrays carry a constant-1 column there;
    residual-projected datasets carry its projection.

    outcome_exposure / outcome_covariates replace S and X in the outcome
    model only; they are set on beta-processed data and None otherwise.
    """
    exposure: np.ndarray
    mediators: np.ndarray
    outcome: np.ndarray
    covariates: np.ndarray
    exposure_name: str = "S"
    mediator_names: Tuple[str, ...] = ()
    outcome_name: str = "Y"
    covariate_names: Tuple[str, ...] = ()
    outcome_exposure: Optional[np.ndarray] = None
    outcome_covariates: Optional[np.ndarray] = None

    def __post_init__(self):
        exposure = _as_readonly(self.exposure, 1, "exposure")
        mediators = _as_readonly(self.mediators, 2, "mediators")
        outcome = _as_readonly(self.outcome, 1, "outcome")
        covariates = _as_readonly(self.covariates, 2, "covariates")

        n = exposure.shape[0]
        if n == 0:
            raise EmptyFile("Dataset has no rows")
        for name, array in (("mediators", mediators), ("outcome", outcome), ("covariates", covariates)):
            if array.shape[0] != n:
                raise InputError(f"{name} has {array.shape[0]} rows, expected {n}")
        if covariates.shape[1] == 0:
            raise InputError("Covariates must include the intercept column")

        if self.outcome_exposure is not None:
            outcome_exposure = _as_readonly(self.outcome_exposure, 1, "outcome_exposure")
            if outcome_exposure.shape != exposure.shape:
                raise InputError("outcome_exposure does not match the exposure column")
            object.__setattr__(self, "outcome_exposure", outcome_exposure)
        if self.outcome_covariates is not None:
            outcome_covariates = _as_readonly(self.outcome_covariates, 2, "outcome_covariates")
            if outcome_covariates.shape != covariates.shape:
                raise InputError("outcome_covariates does not match the covariate columns")
            object.__setattr__(self, "outcome_covariates", outcome_covariates)

        mediator_names = tuple(self.mediator_names) or tuple(
            f"M{j + 1}" for j in range(mediators.shape[1])
        )
        covariate_names = tuple(self.covariate_names) or (INTERCEPT,) + tuple(
            f"X{k}" for k in range(1, covariates.shape[1])
        )
        if len(mediator_names) != mediators.shape[1]:
            raise InputError("mediator_names does not match the mediator columns")
        if len(covariate_names) != covariates.shape[1]:
            raise InputError("covariate_names does not match the covariate columns")

        object.__setattr__(self, "exposure", exposure)
        object.__setattr__(self, "mediators", mediators)
        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "mediator_names", mediator_names)
        object.__setattr__(self, "covariate_names", covariate_names)

    @classmethod
    def from_arrays(cls, exposure, mediators, outcome, covariates=None,
                    mediator_names: Sequence[str] = (),
                    covariate_names: Sequence[str] = ()) -> "Dataset":
        """
        Build a dataset, injecting the intercept column ahead of covariates

        Args:
            exposure: length-n exposure values
            mediators: length-n vector or n x J matrix
            outcome: length-n outcome values
            covariates: optional n x p matrix without an intercept
            mediator_names: optional mediator labels
            covariate_names: optional labels for the non-intercept covariates

        Returns:
            Dataset
        """
        exposure = np.asarray(exposure, dtype=float)
        n = exposure.shape[0]
        intercept = np.ones((n, 1))
        if covariates is None:
            design = intercept
        else:
            extra = np.asarray(covariates, dtype=float)
            if extra.ndim == 1:
                extra = extra.reshape(-1, 1)
            design = np.hstack([intercept, extra])
        names = (INTERCEPT,) + tuple(covariate_names) if covariate_names else ()
        return cls(
            exposure=exposure,
            mediators=mediators,
            outcome=outcome,
            covariates=design,
            mediator_names=tuple(mediator_names),
            covariate_names=names,
        )

    @property
    def n(self) -> int:
        return self.exposure.shape[0]

    @property
    def n_mediators(self) -> int:
        return self.mediators.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    def mediator(self, j: int = 0) -> np.ndarray:
        return self.mediators[:, j]

    @property
    def outcome_model_exposure(self) -> np.ndarray:
        return self.exposure if self.outcome_exposure is None else self.outcome_exposure

    @property
    def outcome_model_covariates(self) -> np.ndarray:
        return self.covariates if self.outcome_covariates is None else self.outcome_covariates

    def take(self, indices: np.ndarray) -> "Dataset":
        """Rows at the given indices (with repetition), e.g. a pairs resample"""
        return replace(
            self,
            exposure=self.exposure[indices],
            mediators=self.mediators[indices],
            outcome=self.outcome[indices],
            covariates=self.covariates[indices],
            outcome_exposure=None if self.outcome_exposure is None else self.outcome_exposure[indices],
            outcome_covariates=None if self.outcome_covariates is None else self.outcome_covariates[indices],
        )

    def select_mediators(self, columns: Sequence[int]) -> "Dataset":
        columns = list(columns)
        return replace(
            self,
            mediators=self.mediators[:, columns],
            mediator_names=tuple(self.mediator_names[j] for j in columns),
        )

    def with_mediators_as_covariates(self, target: int) -> "Dataset":
        """
        Single-mediator dataset for `target`, non-target mediators moved into X
        """
        if not 0 <= target < self.n_mediators:
            raise InputError(
                f"Target mediator {target} out of range for {self.n_mediators} mediators"
            )
        others = [j for j in range(self.n_mediators) if j != target]
        outcome_covariates = self.outcome_covariates
        if outcome_covariates is not None:
            outcome_covariates = np.hstack([outcome_covariates, self.mediators[:, others]])
        return replace(
            self,
            mediators=self.mediators[:, [target]],
            mediator_names=(self.mediator_names[target],),
            covariates=np.hstack([self.covariates, self.mediators[:, others]]),
            covariate_names=self.covariate_names + tuple(self.mediator_names[j] for j in others),
            outcome_covariates=outcome_covariates,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({self.exposure_name: self.exposure})
        for j, name in enumerate(self.mediator_names):
            frame[name] = self.mediators[:, j]
        frame[self.outcome_name] = self.outcome
        for k, name in enumerate(self.covariate_names):
            frame[name] = self.covariates[:, k]
        return frame


def parse_dataset_csv(path: str, role_map: ColumnRoleMap) -> Dataset:
    """
    Load a comma-separated UTF-8 file into a Dataset

    Args:
        path: CSV path with a header row
        role_map: Column names for each role

    Returns:
        Dataset with the intercept injected as the first covariate
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"Data file not found: {path}")

    logger.info(f"Loading data from {path}")
    try:
        df = pd.read_csv(path, sep=",", dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise EmptyFile(f"{path} is empty") from e

    if len(df) == 0:
        raise EmptyFile(f"{path} has a header but no data rows")

    df.columns = [str(c).strip() for c in df.columns]
    for column in role_map.columns():
        if column not in df.columns:
            raise MissingColumn(column, df.columns)

    parsed = {}
    for column in role_map.columns():
        raw = df[column].str.strip()
        values = pd.to_numeric(raw, errors="coerce").to_numpy(dtype=float)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            row = int(bad[0])
            # 1-based data row, header excluded
            raise NonNumericCell(row + 1, column, df[column].iloc[row])
        parsed[column] = values

    covariates = (
        np.column_stack([parsed[c] for c in role_map.covariates])
        if role_map.covariates else None
    )
    dataset = Dataset.from_arrays(
        exposure=parsed[role_map.exposure],
        mediators=np.column_stack([parsed[c] for c in role_map.mediators]),
        outcome=parsed[role_map.outcome],
        covariates=covariates,
        mediator_names=role_map.mediators,
        covariate_names=role_map.covariates,
    )
    dataset = replace(dataset, exposure_name=role_map.exposure, outcome_name=role_map.outcome)

    logger.info(
        f"Loaded {dataset.n:,} rows: {dataset.n_mediators} mediator(s), "
        f"{dataset.n_covariates - 1} covariate(s) + intercept"
    )
    return dataset
