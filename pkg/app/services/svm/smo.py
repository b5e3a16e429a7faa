"""Soft-margin SVM trained by sequential minimal optimization."""
import logging
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from app.core.exceptions import InputError
from app.models.cohort import OutcomeEnum
from app.services.svm.dataset import (
    FloatArray,
    LabeledDataset,
    Standardizer,
    standardize_fit,
)
from app.services.svm.kernels import KernelSpec, kernel_matrix

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-3
DEFAULT_MAX_ITER = 100_000
# Curvature floor for non-positive pair curvature (indefinite kernels).
TAU = 1e-12


class SvmError(InputError):
    code = "svm-error"


class SingleClassError(SvmError):
    code = "single-class"


class FeatureMismatchError(SvmError):
    code = "feature-mismatch"


@dataclass(frozen=True)
class SmoResult:

    alpha: FloatArray
    bias: float
    converged: bool
    iterations: int
    gap: float


def _upper_lower_sets(
    alpha: FloatArray, y: FloatArray, c: float
) -> tuple[npt.NDArray[np.bool_], npt.NDArray[np.bool_]]:
    positive = y > 0
    below_c = alpha < c
    above_zero = alpha > 0
    up = (positive & below_c) | (~positive & above_zero)
    low = (positive & above_zero) | (~positive & below_c)
    return up, low


def _bias(alpha: FloatArray, y: FloatArray, grad: FloatArray, c: float) -> float:
    y_grad = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(-np.mean(y_grad[free]))

    at_upper = alpha >= c
    at_lower = ~at_upper
    positive = y > 0
    lower_side = (positive & at_upper) | (~positive & at_lower)
    upper_side = (positive & at_lower) | (~positive & at_upper)
    lb = float(np.max(y_grad[lower_side])) if lower_side.any() else -np.inf
    ub = float(np.min(y_grad[upper_side])) if upper_side.any() else np.inf
    if np.isinf(lb):
        lb = ub
    if np.isinf(ub):
        ub = lb
    return -0.5 * (lb + ub)


def _smo_solve(
    kernel: FloatArray,
    y: npt.ArrayLike,
    c: float,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SmoResult:
    """
    Solve the SVM dual on a precomputed kernel matrix.

    Each step takes the maximal violating pair ``i in I_up``, ``j in I_low``
    of the dual gradient and moves along ``alpha_i += y_i * lam``,
    ``alpha_j -= y_j * lam``, which keeps ``sum(alpha * y)`` fixed. Ties in
    the pair selection go to the lowest row index.

    Args:
        kernel: n x n kernel matrix of the training rows
        y: Labels coded +1 / -1
        c: Box constraint
        tol: Stop once the maximal KKT violation falls below this
        max_iter: Iteration cap

    Returns:
        SmoResult with dual variables, bias and convergence flag
    """
    labels = np.asarray(y, dtype=np.float64)
    n = labels.size
    diag = np.diag(kernel).copy()
    alpha = np.zeros(n)
    # Gradient of 0.5 * a^T Q a - sum(a), Q_ts = y_t y_s K_ts.
    grad = -np.ones(n)

    converged = False
    gap = np.inf
    iterations = 0
    while iterations < max_iter:
        up, low = _upper_lower_sets(alpha, labels, c)
        if not up.any() or not low.any():
            converged = True
            gap = 0.0
            break

        score = -labels * grad
        up_scores = np.where(up, score, -np.inf)
        low_scores = np.where(low, score, np.inf)
        i = int(np.argmax(up_scores))
        j = int(np.argmin(low_scores))
        gap = float(up_scores[i] - low_scores[j])
        if gap < tol:
            converged = True
            break

        curvature = diag[i] + diag[j] - 2.0 * kernel[i, j]
        if curvature <= 0.0:
            curvature = TAU
        step = gap / curvature

        room_i = c - alpha[i] if labels[i] > 0 else alpha[i]
        room_j = alpha[j] if labels[j] > 0 else c - alpha[j]
        step = min(step, room_i, room_j)

        alpha[i] += labels[i] * step
        alpha[j] -= labels[j] * step
        alpha[i] = min(max(alpha[i], 0.0), c)
        alpha[j] = min(max(alpha[j], 0.0), c)
        grad += labels * step * (kernel[:, i] - kernel[:, j])
        iterations += 1

    return SmoResult(
        alpha=alpha,
        bias=_bias(alpha, labels, grad, c),
        converged=converged,
        iterations=iterations,
        gap=gap,
    )


@dataclass(frozen=True)
class SvmModel:
    """
    Trained binary classifier.

    ``decision(x) = sum(dual_coefs * K(support_vectors, z(x))) + bias`` with
    ``z`` the stored standardizer; positive means improved.
    """

    support_vectors: FloatArray
    dual_coefs: FloatArray
    bias: float
    kernel: KernelSpec
    standardizer: Standardizer
    feature_names: tuple[str, ...]
    c: float
    converged: bool = True
    iterations: int = 0

    @property
    def n_support(self) -> int:
        return int(self.dual_coefs.size)

    def to_dict(self) -> dict[str, Any]:

        return {
            "feature_names": list(self.feature_names),
            "kernel": self.kernel.to_dict(),
            "c": self.c,
            "bias": self.bias,
            "dual_coefs": self.dual_coefs.tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "standardizer": self.standardizer.to_dict(),
            "converged": self.converged,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SvmModel":

        names = tuple(data["feature_names"])
        vectors = np.asarray(data["support_vectors"], dtype=np.float64).reshape(-1, len(names))
        return cls(
            support_vectors=vectors,
            dual_coefs=np.asarray(data["dual_coefs"], dtype=np.float64),
            bias=float(data["bias"]),
            kernel=KernelSpec.from_dict(data["kernel"]),
            standardizer=Standardizer.from_dict(data["standardizer"]),
            feature_names=names,
            c=float(data["c"]),
            converged=bool(data.get("converged", True)),
            iterations=int(data.get("iterations", 0)),
        )


def train_svm(
    data: LabeledDataset,
    c: float,
    kernel: KernelSpec,
    *,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    standardize: bool = True,
) -> SvmModel:
    """
    Train on a labelled dataset.

    Rows are put in canonical order and z-scored with statistics of these
    rows only before SMO runs, so row order does not change the model.

    Raises:
        SvmError: c is not positive
        SingleClassError: only one label is present
    """
    if not c > 0:
        raise SvmError(f"Penalty C must be positive, got {c}")
    if not data.has_both_classes():
        raise SingleClassError(
            f"Training needs both classes, got {data.n_improved} improved "
            f"and {data.n_nonimproved} nonimproved"
        )

    ordered = data.take(data.canonical_order())
    if standardize:
        standardizer = standardize_fit(ordered.x, ordered.feature_names)
    else:
        standardizer = Standardizer.identity(ordered.n_features)
    z = standardizer.apply(ordered.x)

    result = _smo_solve(kernel_matrix(kernel, z, z), ordered.y, c, tol, max_iter)
    if not result.converged:
        logger.warning(
            f"SMO stopped at the {max_iter}-iteration cap with KKT gap {result.gap:.3g} "
            f"(C={c:g}, kernel={kernel.kind.value}, gamma={kernel.gamma:g})"
        )

    support = result.alpha > 0
    return SvmModel(
        support_vectors=z[support],
        dual_coefs=result.alpha[support] * ordered.y[support],
        bias=result.bias,
        kernel=kernel,
        standardizer=standardizer,
        feature_names=ordered.feature_names,
        c=float(c),
        converged=result.converged,
        iterations=result.iterations,
    )


def _as_rows(model: SvmModel, x: Mapping[str, float] | npt.ArrayLike) -> FloatArray:
    if isinstance(x, Mapping):
        missing = [name for name in model.feature_names if name not in x]
        if missing:
            raise FeatureMismatchError(
                f"Missing features {missing}; model uses {list(model.feature_names)}"
            )
        values = np.array([[float(x[name]) for name in model.feature_names]])  # type: ignore[arg-type]
    else:
        values = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if values.shape[1] != len(model.feature_names):
        raise FeatureMismatchError(
            f"Got {values.shape[1]} features, model uses {len(model.feature_names)}"
        )
    return values


def decision_function(model: SvmModel, rows: Mapping[str, float] | npt.ArrayLike) -> FloatArray:
    """Decision values of raw (unstandardized) feature rows."""
    z = model.standardizer.apply(_as_rows(model, rows))
    if model.n_support == 0:
        return np.full(z.shape[0], model.bias)
    return kernel_matrix(model.kernel, z, model.support_vectors) @ model.dual_coefs + model.bias


def predict(model: SvmModel, x: Mapping[str, float] | npt.ArrayLike) -> tuple[OutcomeEnum, float]:
    """
    Classify one feature vector.

    A decision value of exactly zero maps to nonimproved.

    Raises:
        FeatureMismatchError: x does not carry the model's features
    """
    rows = _as_rows(model, x)
    if rows.shape[0] != 1:
        raise FeatureMismatchError(f"predict takes one row, got {rows.shape[0]}")
    value = float(decision_function(model, rows)[0])
    return OutcomeEnum.from_sign(value), value


def predict_many(model: SvmModel, rows: npt.ArrayLike) -> npt.NDArray[np.int64]:

    values = decision_function(model, rows)
    return np.where(values > 0, 1, -1).astype(np.int64)
