"""Stratified K-fold cross-validation and (C, gamma) grid search."""
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed

from app.core.exceptions import InputError, NumericalError, OaeError
from app.services.svm.dataset import (
    DatasetError,
    FloatArray,
    IntArray,
    LabeledDataset,
    standardize_fit,
)
from app.services.svm.kernels import KernelSpec
from app.services.svm.smo import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
    SingleClassError,
    SvmError,
    _smo_solve,
)

logger = logging.getLogger(__name__)

DEFAULT_FOLDS = 5
DEFAULT_LOG2_RANGE = (-6.0, 6.0)
DEFAULT_LOG2_STEP = 0.1


class ValidationError(InputError):
    code = "validation-error"


class KTooLargeError(ValidationError):
    code = "k-too-large"


class GridSearchFailedError(NumericalError):
    code = "grid-search-failed"


def log2_grid(
    lo: float = DEFAULT_LOG2_RANGE[0],
    hi: float = DEFAULT_LOG2_RANGE[1],
    step: float = DEFAULT_LOG2_STEP,
) -> FloatArray:
    """Powers of two with exponents ``lo, lo + step, ..., hi``."""
    if not step > 0:
        raise ValidationError(f"Grid step must be positive, got {step}")
    if hi < lo:
        raise ValidationError(f"Grid exponent range [{lo:g}, {hi:g}] is empty")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    exponents = np.round(lo + step * np.arange(count), 10)
    return np.power(2.0, exponents)


@dataclass(frozen=True)
class ParameterGrid:
    """(C, gamma) lattice; both axes are kept in ascending order."""

    c_values: tuple[float, ...]
    gamma_values: tuple[float, ...]

    def __post_init__(self) -> None:
        c_values = tuple(sorted(float(v) for v in self.c_values))
        gamma_values = tuple(sorted(float(v) for v in self.gamma_values))
        if not c_values or not gamma_values:
            raise ValidationError("Grid axes must not be empty")
        if min(c_values) <= 0 or min(gamma_values) <= 0:
            raise ValidationError("Grid values must be positive")
        object.__setattr__(self, "c_values", c_values)
        object.__setattr__(self, "gamma_values", gamma_values)

    @classmethod
    def log2(
        cls,
        lo: float = DEFAULT_LOG2_RANGE[0],
        hi: float = DEFAULT_LOG2_RANGE[1],
        step: float = DEFAULT_LOG2_STEP,
    ) -> "ParameterGrid":
        values = tuple(log2_grid(lo, hi, step).tolist())
        return cls(c_values=values, gamma_values=values)

    @classmethod
    def single(cls, c: float, gamma: float) -> "ParameterGrid":
        return cls(c_values=(c,), gamma_values=(gamma,))

    @property
    def size(self) -> int:
        return len(self.c_values) * len(self.gamma_values)


@dataclass
class CvReport:
    """Cross-validated accuracy of the best grid cell and of every cell."""

    fold_accuracies: list[float]
    mean_accuracy: float
    best_c: float
    best_gamma: float
    grid_results: dict[tuple[float, float], float]
    seed: int | None
    k: int
    feature_names: tuple[str, ...] = ()
    n_rows: int = 0
    failures: dict[tuple[float, float], str] = field(default_factory=dict)
    non_converged: int = 0

    def to_dict(self) -> dict[str, Any]:

        return {
            "feature_names": list(self.feature_names),
            "n_rows": self.n_rows,
            "k": self.k,
            "seed": self.seed,
            "best_c": self.best_c,
            "best_gamma": self.best_gamma,
            "mean_accuracy": self.mean_accuracy,
            "fold_accuracies": list(self.fold_accuracies),
            "non_converged": self.non_converged,
            "grid_results": [
                {"c": c, "gamma": gamma, "accuracy": accuracy}
                for (c, gamma), accuracy in self.grid_results.items()
            ],
            "failures": [
                {"c": c, "gamma": gamma, "error": error}
                for (c, gamma), error in self.failures.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CvReport":

        return cls(
            fold_accuracies=[float(v) for v in data["fold_accuracies"]],
            mean_accuracy=float(data["mean_accuracy"]),
            best_c=float(data["best_c"]),
            best_gamma=float(data["best_gamma"]),
            grid_results={
                (float(cell["c"]), float(cell["gamma"])): float(cell["accuracy"])
                for cell in data.get("grid_results", [])
            },
            seed=data.get("seed"),
            k=int(data["k"]),
            feature_names=tuple(data.get("feature_names", ())),
            n_rows=int(data.get("n_rows", 0)),
            failures={
                (float(cell["c"]), float(cell["gamma"])): str(cell["error"])
                for cell in data.get("failures", [])
            },
            non_converged=int(data.get("non_converged", 0)),
        )


def kfold_split(
    n: int,
    k: int,
    seed: int | None = None,
    labels: npt.ArrayLike | None = None,
) -> list[IntArray]:
    """
    Partition ``range(n)`` into ``k`` folds.

    With labels, each class is shuffled and dealt round-robin, the dealing
    position carrying on from one class to the next, so fold sizes differ by
    at most one and each fold's class count is within one of its share.

    Args:
        n: Number of rows
        k: Number of folds, 2 <= k <= n
        seed: Seed of the shuffle
        labels: Optional class labels for stratification

    Returns:
        k sorted index arrays

    Raises:
        KTooLargeError: k is larger than n or smaller than 2, or, with
            labels, larger than the size of some class
    """
    if k < 2 or k > n:
        raise KTooLargeError(f"Cannot split {n} rows into {k} folds")

    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    if labels is None:
        order = rng.permutation(n)
        assignment[order] = np.arange(n) % k
    else:
        classes = np.asarray(labels)
        if classes.shape != (n,):
            raise ValidationError("Need exactly one label per row")
        values, counts = np.unique(classes, return_counts=True)
        if np.any(counts < k):
            smallest = int(np.argmin(counts))
            raise KTooLargeError(
                f"Class {values[smallest]} has {counts[smallest]} rows, fewer than {k} folds",
                class_size=int(counts[smallest]),
                k=k,
            )
        offset = 0
        for value in values:
            members = rng.permutation(np.flatnonzero(classes == value))
            assignment[members] = (offset + np.arange(members.size)) % k
            offset = (offset + members.size) % k

    return [np.flatnonzero(assignment == fold).astype(np.int64) for fold in range(k)]


@dataclass(frozen=True)
class _Fold:
    """Standardized Gram blocks of one split; ``error`` is set when the fold is unusable."""

    y_train: IntArray
    y_val: IntArray
    gram_train: FloatArray
    gram_val: FloatArray
    error: str | None = None


def _prepare_folds(data: LabeledDataset, folds: list[IntArray]) -> list[_Fold]:
    prepared: list[_Fold] = []
    everything = np.arange(data.n_rows)
    for number, val_index in enumerate(folds):
        train = data.take(np.setdiff1d(everything, val_index))
        train = train.take(train.canonical_order())
        if not train.has_both_classes():
            logger.warning(f"Training part of fold {number} lacks a class")
        try:
            standardizer = standardize_fit(train.x, train.feature_names)
        except DatasetError as e:
            logger.warning(f"Fold {number} cannot be standardized: {e.message}")
            empty = np.empty((0, 0))
            prepared.append(_Fold(train.y, data.y[val_index], empty, empty, error=e.code))
            continue
        z_train = standardizer.apply(train.x)
        z_val = standardizer.apply(data.x[val_index])
        prepared.append(
            _Fold(
                y_train=train.y,
                y_val=data.y[val_index],
                gram_train=z_train @ z_train.T,
                gram_val=z_val @ z_train.T,
            )
        )
    return prepared


def _fold_accuracy(
    fold: _Fold,
    kernel_train: FloatArray,
    kernel_val: FloatArray,
    c: float,
    tol: float,
    max_iter: int,
) -> tuple[float, bool]:
    if not (np.any(fold.y_train > 0) and np.any(fold.y_train < 0)):
        raise SingleClassError("A training fold holds a single class")
    result = _smo_solve(kernel_train, fold.y_train, c, tol, max_iter)
    decision = kernel_val @ (result.alpha * fold.y_train) + result.bias
    predicted = np.where(decision > 0, 1, -1)
    return float(np.mean(predicted == fold.y_val)), result.converged


def _evaluate_kernel(
    kernel: KernelSpec,
    c_values: tuple[float, ...],
    folds: list[_Fold],
    tol: float,
    max_iter: int,
) -> list[tuple[list[float] | None, str | None, int]]:
    """Fold accuracies of every C for one kernel; failures are returned, not raised."""
    broken = next((fold.error for fold in folds if fold.error is not None), None)
    if broken is not None:
        return [(None, broken, 0) for _ in c_values]
    kernels = [(kernel.apply(f.gram_train), kernel.apply(f.gram_val)) for f in folds]
    results: list[tuple[list[float] | None, str | None, int]] = []
    for c in c_values:
        try:
            accuracies: list[float] = []
            non_converged = 0
            for fold, (k_train, k_val) in zip(folds, kernels):
                accuracy, converged = _fold_accuracy(fold, k_train, k_val, c, tol, max_iter)
                accuracies.append(accuracy)
                non_converged += int(not converged)
            results.append((accuracies, None, non_converged))
        except (OaeError, FloatingPointError, np.linalg.LinAlgError) as e:
            results.append((None, getattr(e, "code", type(e).__name__), 0))
    return results


def _report(
    data: LabeledDataset,
    grid: ParameterGrid,
    columns: list[list[tuple[list[float] | None, str | None, int]]],
    seed: int | None,
    k: int,
) -> CvReport:
    grid_results: dict[tuple[float, float], float] = {}
    failures: dict[tuple[float, float], str] = {}
    fold_table: dict[tuple[float, float], list[float]] = {}
    non_converged = 0

    for c_index, c in enumerate(grid.c_values):
        for g_index, gamma in enumerate(grid.gamma_values):
            accuracies, error, misses = columns[g_index][c_index]
            non_converged += misses
            if accuracies is None:
                failures[(c, gamma)] = error or "unknown"
                continue
            grid_results[(c, gamma)] = float(np.mean(accuracies))
            fold_table[(c, gamma)] = accuracies

    if not grid_results:
        raise GridSearchFailedError(
            f"All {grid.size} grid cells failed",
            failures={f"{c:g},{g:g}": e for (c, g), e in failures.items()},
        )

    # Row-major over ascending C then gamma, strict improvement keeps the first maximum.
    best = next(iter(grid_results))
    for cell, accuracy in grid_results.items():
        if accuracy > grid_results[best]:
            best = cell

    if failures:
        logger.info(f"{len(failures)} of {grid.size} grid cells failed and were skipped")
    if non_converged:
        logger.warning(f"{non_converged} fold fits hit the SMO iteration cap")

    return CvReport(
        fold_accuracies=fold_table[best],
        mean_accuracy=grid_results[best],
        best_c=best[0],
        best_gamma=best[1],
        grid_results=grid_results,
        seed=seed,
        k=k,
        feature_names=data.feature_names,
        n_rows=data.n_rows,
        failures=failures,
        non_converged=non_converged,
    )


def _folds_for(data: LabeledDataset, k: int, seed: int | None, stratified: bool) -> list[_Fold]:
    if not data.has_both_classes():
        raise SingleClassError("Cross-validation needs both classes")
    split = kfold_split(data.n_rows, k, seed, data.y if stratified else None)
    return _prepare_folds(data, split)


def cross_validate(
    data: LabeledDataset,
    c: float,
    kernel: KernelSpec,
    k: int = DEFAULT_FOLDS,
    seed: int | None = None,
    *,
    stratified: bool = True,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CvReport:
    """K-fold accuracy of one (C, kernel) setting."""
    if not c > 0:
        raise SvmError(f"Penalty C must be positive, got {c}")
    folds = _folds_for(data, k, seed, stratified)
    column = _evaluate_kernel(kernel, (float(c),), folds, tol, max_iter)
    grid = ParameterGrid.single(c, kernel.gamma if kernel.gamma > 0 else 1.0)
    return _report(data, grid, [column], seed, k)


def grid_search_cv(
    data: LabeledDataset,
    grid: ParameterGrid,
    k: int = DEFAULT_FOLDS,
    seed: int | None = None,
    *,
    coef0: float = 0.0,
    stratified: bool = True,
    n_jobs: int = 1,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CvReport:
    """
    Sigmoid-kernel grid search with K-fold validation.

    One split is drawn from the seed and shared by every cell. Each fold's
    standardizer is fitted on its training part only. Gamma columns may run
    in parallel; results are merged in grid order, and the best cell is the
    first maximum over ascending C, then ascending gamma.

    Raises:
        KTooLargeError: k does not fit the dataset
        GridSearchFailedError: no cell could be evaluated
    """
    folds = _folds_for(data, k, seed, stratified)
    logger.info(
        f"Grid search over {grid.size} cells, {k} folds, {data.n_rows} rows "
        f"({', '.join(data.feature_names)})"
    )

    columns = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate_kernel)(
            KernelSpec.sigmoid(gamma, coef0), grid.c_values, folds, tol, max_iter
        )
        for gamma in grid.gamma_values
    )
    report = _report(data, grid, list(columns), seed, k)
    logger.info(
        f"Best cell C={report.best_c:.4g}, gamma={report.best_gamma:.4g}: "
        f"accuracy {report.mean_accuracy:.1%}"
    )
    return report
