"""Principal component analysis of windowed TEOAE waveforms."""
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy import linalg

from app.core.exceptions import InputError
from app.services.epoching import FloatArray, TeoaeSignal

logger = logging.getLogger(__name__)

DEFAULT_COMPONENTS = 3
EIGENVALUE_CLAMP = 1e-12
TIE_RTOL = 1e-12


class PcaError(InputError):
    code = "pca-error"


class LengthMismatchError(PcaError):
    code = "length-mismatch"


@dataclass(frozen=True)
class PcPoint:

    pc1: float
    pc2: float
    pc3: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.pc1, self.pc2, self.pc3)


@dataclass(frozen=True)
class PcaModel:
    """Mean waveform, leading eigenvectors (as columns) and their eigenvalues."""

    mean: FloatArray
    basis: FloatArray
    eigenvalues: FloatArray
    total_variance: float
    n_signals: int

    @property
    def length(self) -> int:
        return int(self.mean.size)

    @property
    def n_components(self) -> int:
        return int(self.basis.shape[1])

    @property
    def explained_variance_ratio(self) -> FloatArray:
        if self.total_variance <= 0.0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / self.total_variance

    def to_dict(self) -> dict[str, Any]:

        return {
            "length": self.length,
            "n_components": self.n_components,
            "n_signals": self.n_signals,
            "mean": self.mean.tolist(),
            "basis_columns": self.basis.T.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "total_variance": self.total_variance,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PcaModel":

        basis = np.asarray(data["basis_columns"], dtype=np.float64).T
        mean = np.asarray(data["mean"], dtype=np.float64)
        if basis.shape[0] != mean.size:
            raise PcaError("Stored basis does not match the stored mean length")
        return cls(
            mean=mean,
            basis=basis,
            eigenvalues=np.asarray(data["eigenvalues"], dtype=np.float64),
            total_variance=float(data["total_variance"]),
            n_signals=int(data["n_signals"]),
        )


def _signal_matrix(signals: Sequence[TeoaeSignal] | npt.ArrayLike) -> FloatArray:
    if isinstance(signals, np.ndarray):
        matrix = np.asarray(signals, dtype=np.float64)
    else:
        rows = [s.samples if isinstance(s, TeoaeSignal) else np.asarray(s) for s in signals]  # type: ignore[union-attr]
        lengths = {len(row) for row in rows}
        if len(lengths) > 1:
            raise LengthMismatchError(f"Signals have differing lengths: {sorted(lengths)}")
        matrix = np.asarray(rows, dtype=np.float64)
    if matrix.ndim != 2:
        raise PcaError("Signals must form a 2-D matrix")
    return matrix


def _fix_signs(basis: FloatArray) -> FloatArray:
    """Flip each column so its largest-magnitude entry is positive."""
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def _order_ties(eigenvalues: FloatArray, basis: FloatArray) -> FloatArray:
    """Within runs of equal eigenvalues, order columns by their first differing entry."""
    start = 0
    ordered = basis.copy()
    while start < eigenvalues.size:
        stop = start + 1
        while stop < eigenvalues.size and np.isclose(
            eigenvalues[stop], eigenvalues[start], rtol=TIE_RTOL, atol=0.0
        ):
            stop += 1
        if stop - start > 1:
            block = ordered[:, start:stop]
            keys = [tuple(-block[:, j]) for j in range(block.shape[1])]
            order = sorted(range(block.shape[1]), key=lambda j: keys[j])
            ordered[:, start:stop] = block[:, order]
        start = stop
    return ordered


def fit_pca(signals: Sequence[TeoaeSignal] | npt.ArrayLike, m: int = DEFAULT_COMPONENTS) -> PcaModel:
    """
    Fit the waveform PCA across all supplied ears.

    The covariance uses the population (1/N) average. It is never formed
    explicitly: eigenpairs come from the thin SVD of the centred data
    matrix, ``C = V diag(s^2 / N) V^T``.

    Args:
        signals: Windowed signals of identical length, or an N x L matrix
        m: Number of leading components to keep

    Returns:
        PcaModel with descending eigenvalues and sign-fixed basis columns
    """
    data = _signal_matrix(signals)
    n_signals, length = data.shape
    if n_signals < 2:
        raise PcaError("PCA needs at least 2 signals")
    if m < 1 or m > min(length, n_signals - 1):
        raise PcaError(
            f"Cannot keep {m} components from {n_signals} signals of length {length}"
        )

    mean = data.mean(axis=0)
    centered = data - mean
    total_variance = float(np.sum(np.square(centered)) / n_signals)

    _, singular, vt = linalg.svd(centered, full_matrices=False)
    eigenvalues = np.square(singular[:m]) / n_signals
    eigenvalues[eigenvalues < EIGENVALUE_CLAMP * max(eigenvalues[0], 0.0)] = 0.0
    eigenvalues = np.maximum(eigenvalues, 0.0)

    basis = _order_ties(eigenvalues, _fix_signs(vt[:m].T))
    if total_variance == 0.0:
        logger.warning("All signals are identical; PCA eigenvalues are zero")
    else:
        captured = float(eigenvalues.sum() / total_variance)
        logger.info(f"PCA on {n_signals} signals: {m} components capture {captured:.1%} of variance")

    return PcaModel(
        mean=mean,
        basis=basis,
        eigenvalues=eigenvalues,
        total_variance=total_variance,
        n_signals=n_signals,
    )


def coefficients(model: PcaModel, sig: TeoaeSignal | npt.ArrayLike) -> FloatArray:

    samples = sig.samples if isinstance(sig, TeoaeSignal) else np.asarray(sig, dtype=np.float64)
    if samples.shape != model.mean.shape:
        raise LengthMismatchError(
            f"Signal has {samples.size} samples, model expects {model.length}"
        )
    return model.basis.T @ (samples - model.mean)


def project(model: PcaModel, sig: TeoaeSignal | npt.ArrayLike) -> PcPoint:
    """Map a waveform to (PC1, PC2, PC3)."""
    if model.n_components < 3:
        raise PcaError(f"Projection to (PC1, PC2, PC3) needs 3 components, model has {model.n_components}")
    coeffs = coefficients(model, sig)
    return PcPoint(pc1=float(coeffs[0]), pc2=float(coeffs[1]), pc3=float(coeffs[2]))


def reconstruct(model: PcaModel, coeffs: npt.ArrayLike) -> FloatArray:

    weights = np.asarray(coeffs, dtype=np.float64)
    return model.mean + model.basis[:, : weights.size] @ weights
