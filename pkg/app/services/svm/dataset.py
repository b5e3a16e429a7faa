"""Labelled feature matrices and per-feature z-scoring."""
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from app.core.exceptions import InputError
from app.models.cohort import OutcomeEnum

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


class DatasetError(InputError):
    code = "dataset-error"


class ZeroVarianceFeatureError(DatasetError):
    code = "zero-variance-feature"


@dataclass(frozen=True)
class LabeledDataset:
    """
    Feature rows with labels coded +1 (improved) and -1 (nonimproved).

    Column ``j`` of ``x`` holds feature ``feature_names[j]``.
    """

    x: FloatArray
    y: IntArray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        x = np.array(self.x, dtype=np.float64, copy=True)
        y = np.array(self.y, dtype=np.int64, copy=True)
        names = tuple(self.feature_names)
        if x.ndim == 1 and x.size == 0:
            x = x.reshape(0, len(names))
        if x.ndim != 2:
            raise DatasetError(f"Feature matrix must be 2-D, got shape {x.shape}")
        if x.shape[1] != len(names):
            raise DatasetError(
                f"Feature matrix has {x.shape[1]} columns for {len(names)} feature names"
            )
        if y.shape != (x.shape[0],):
            raise DatasetError("Need exactly one label per row")
        if not np.all(np.isin(y, (-1, 1))):
            raise DatasetError("Labels must be +1 or -1")
        if not np.all(np.isfinite(x)):
            raise DatasetError("Feature values must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_labels(
        cls,
        x: npt.ArrayLike,
        labels: Sequence[OutcomeEnum | str],
        feature_names: Sequence[str],
    ) -> "LabeledDataset":

        y = np.array([OutcomeEnum(label).sign for label in labels], dtype=np.int64)
        return cls(x=np.asarray(x, dtype=np.float64), y=y, feature_names=tuple(feature_names))

    @property
    def n_rows(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.x.shape[1])

    @property
    def n_improved(self) -> int:
        return int(np.sum(self.y == 1))

    @property
    def n_nonimproved(self) -> int:
        return int(np.sum(self.y == -1))

    @property
    def labels(self) -> list[OutcomeEnum]:
        return [OutcomeEnum.from_sign(v) for v in self.y]

    def has_both_classes(self) -> bool:
        return self.n_improved > 0 and self.n_nonimproved > 0

    def take(self, index: npt.ArrayLike) -> "LabeledDataset":

        rows = np.asarray(index, dtype=np.int64)
        return LabeledDataset(x=self.x[rows], y=self.y[rows], feature_names=self.feature_names)

    def canonical_order(self) -> IntArray:
        """Row order sorted lexicographically by features, then label."""
        if self.n_rows == 0:
            return np.zeros(0, dtype=np.int64)
        keys = np.vstack([self.y[None, :], self.x[:, ::-1].T])
        return np.lexsort(keys).astype(np.int64)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature mean and population SD learned on training rows."""

    mean: FloatArray
    scale: FloatArray

    @classmethod
    def identity(cls, n_features: int) -> "Standardizer":
        return cls(mean=np.zeros(n_features), scale=np.ones(n_features))

    def apply(self, rows: npt.ArrayLike) -> FloatArray:

        values = np.asarray(rows, dtype=np.float64)
        if values.shape[-1] != self.mean.size:
            raise DatasetError(
                f"Rows have {values.shape[-1]} features, standardizer expects {self.mean.size}"
            )
        return (values - self.mean) / self.scale

    def invert(self, rows: npt.ArrayLike) -> FloatArray:
        return np.asarray(rows, dtype=np.float64) * self.scale + self.mean

    def to_dict(self) -> dict[str, Any]:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Standardizer":
        return cls(
            mean=np.asarray(data["mean"], dtype=np.float64),
            scale=np.asarray(data["scale"], dtype=np.float64),
        )


def standardize_fit(rows: npt.ArrayLike, feature_names: Sequence[str] | None = None) -> Standardizer:
    """
    Learn z-score parameters from training rows.

    Raises:
        DatasetError: fewer than 2 rows
        ZeroVarianceFeatureError: a feature is constant over the rows
    """
    values = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if values.shape[0] < 2:
        raise DatasetError("Standardization needs at least 2 rows")
    mean = values.mean(axis=0)
    scale = values.std(axis=0)
    constant = np.flatnonzero(scale <= 0.0)
    if constant.size:
        names = [feature_names[j] if feature_names else str(j) for j in constant]
        raise ZeroVarianceFeatureError(
            f"Features with zero variance: {', '.join(names)}",
            features=names,
        )
    return Standardizer(mean=mean, scale=scale)


def standardize_apply(standardizer: Standardizer, rows: npt.ArrayLike) -> FloatArray:

    return standardizer.apply(rows)
