"""
Dataset type, CSV ingestion and donor-statistics standardization.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from errors import DataError

logger = logging.getLogger(__name__)

DOMAINS = ('source', 'target')
VISIBILITY = ('train-visible', 'eval-only')


@dataclass(frozen=True)
class Dataset:
    """Covariates X (n x p) and continuous labels Y (n x m) of one domain."""
    X: np.ndarray
    Y: Optional[np.ndarray]
    domain_tag: str = 'source'
    label_visibility: str = 'train-visible'
    feature_names: tuple = field(default=())
    label_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, 'X', X)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"X must be n x p with n, p >= 1, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains NaN or Inf")
        if self.Y is not None:
            Y = np.asarray(self.Y, dtype=np.float64)
            if Y.ndim == 1:
                Y = Y[:, None]
            object.__setattr__(self, 'Y', Y)
            if Y.ndim != 2 or Y.shape[0] != X.shape[0]:
                raise DataError(f"Y must have {X.shape[0]} rows, got shape {Y.shape}")
            if not np.all(np.isfinite(Y)):
                raise DataError("Y contains NaN or Inf")
        if self.domain_tag not in DOMAINS:
            raise DataError(f"domain_tag must be one of {DOMAINS}, got '{self.domain_tag}'")
        if self.label_visibility not in VISIBILITY:
            raise DataError(f"label_visibility must be one of {VISIBILITY}, got '{self.label_visibility}'")
        if not self.feature_names:
            object.__setattr__(self, 'feature_names', tuple(f"x{i + 1}" for i in range(X.shape[1])))
        if not self.label_names and self.Y is not None:
            object.__setattr__(self, 'label_names', tuple(f"y{i + 1}" for i in range(self.Y.shape[1])))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def labeled(self) -> bool:
        return self.Y is not None

    def as_domain(self, domain_tag: str, label_visibility: Optional[str] = None) -> 'Dataset':
        if label_visibility is None:
            label_visibility = 'eval-only' if domain_tag == 'target' else 'train-visible'
        return replace(self, domain_tag=domain_tag, label_visibility=label_visibility)

    def subset(self, indices) -> 'Dataset':
        idx = np.asarray(indices)
        return replace(self, X=self.X[idx], Y=None if self.Y is None else self.Y[idx])


class Standardizer:
    """Per-column affine map to zero mean and unit variance, fitted on a donor array.

    Zero-variance columns pass through unchanged.
    """

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, values: np.ndarray) -> 'Standardizer':
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        return cls(np.where(constant, 0.0, mean), np.where(constant, 1.0, std))

    def _check(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.mean.shape[0]:
            raise DataError(f"expected {self.mean.shape[0]} columns, got shape {values.shape}")
        return values

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (self._check(values) - self.mean) / self.scale

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return self._check(values) * self.scale + self.mean

    def to_dict(self) -> dict:
        return {'mean': self.mean.tolist(), 'scale': self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> 'Standardizer':
        return cls(data['mean'], data['scale'])


def standardize(train_stats_from: Dataset, apply_to: Dataset) -> Dataset:
    """Standardize apply_to's covariates with the donor dataset's column statistics."""
    if train_stats_from.X.shape[1] != apply_to.X.shape[1]:
        raise DataError(
            f"feature counts differ: donor has {train_stats_from.X.shape[1]}, "
            f"target of standardization has {apply_to.X.shape[1]}"
        )
    scaler = Standardizer.fit(train_stats_from.X)
    return replace(apply_to, X=scaler.transform(apply_to.X))


def _parse_column(values: pd.Series, column: str) -> np.ndarray:
    try:
        parsed = np.asarray(values.to_numpy(), dtype=np.float64)
    except ValueError:
        parsed = None
    if parsed is not None and np.all(np.isfinite(parsed)):
        return parsed
    for row, cell in enumerate(values.tolist(), start=1):
        try:
            ok = np.isfinite(float(cell))
        except ValueError:
            ok = False
        if not ok:
            raise DataError(f"non-numeric value '{cell}' in column '{column}' at row {row} (line {row + 1})")
    raise DataError(f"column '{column}' could not be parsed")


def load_csv(path, label_columns: Sequence[str] = (), domain_tag: str = 'source') -> Dataset:
    """Load a comma-separated file with a header row.

    Args:
        path: CSV file
        label_columns: label column names; every other column is a covariate
        domain_tag: 'source' or 'target'

    Returns:
        Dataset with rows in file order
    """
    if not os.path.exists(path):
        raise DataError(f"CSV file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding='utf-8')
    except pd.errors.EmptyDataError as e:
        raise DataError(f"CSV file is empty: {path}") from e
    except pd.errors.ParserError as e:
        raise DataError(f"could not parse {path}: {e}") from e
    if frame.shape[0] == 0:
        raise DataError(f"CSV file has a header but no data rows: {path}")

    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    missing = [c for c in label_columns if c not in columns]
    if missing:
        raise DataError(f"label column(s) {missing} not in {path}; header is {columns}")
    features = [c for c in columns if c not in label_columns]
    if not features:
        raise DataError(f"{path} has no covariate columns besides the labels")

    X = np.column_stack([_parse_column(frame[c], c) for c in features])
    Y = np.column_stack([_parse_column(frame[c], c) for c in label_columns]) if label_columns else None
    logger.info("Loaded %s: %d rows, %d features, %d labels", path, X.shape[0], X.shape[1], len(label_columns))
    return Dataset(
        X=X, Y=Y,
        domain_tag=domain_tag,
        label_visibility='eval-only' if domain_tag == 'target' else 'train-visible',
        feature_names=tuple(features),
        label_names=tuple(label_columns),
    )


def write_csv(dataset: Dataset, path) -> None:
    """Write covariates then labels with a header; floats keep their shortest round-trip repr."""
    columns = {name: dataset.X[:, i] for i, name in enumerate(dataset.feature_names)}
    if dataset.Y is not None:
        columns.update({name: dataset.Y[:, i] for i, name in enumerate(dataset.label_names)})
    frame = pd.DataFrame({name: [repr(float(v)) for v in col] for name, col in columns.items()})
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, encoding='utf-8')
