import enum
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from app.core.exceptions import InputError

FloatArray = npt.NDArray[np.float64]


class KernelKindEnum(str, enum.Enum):

    SIGMOID = "sigmoid"
    LINEAR = "linear"


class KernelError(InputError):
    code = "kernel-error"


@dataclass(frozen=True)
class KernelSpec:
    """
    ``K(u, v) = tanh(gamma * <u, v> + coef0)`` for the sigmoid kind,
    ``<u, v>`` for the linear kind.
    """

    kind: KernelKindEnum = KernelKindEnum.SIGMOID
    gamma: float = 1.0
    coef0: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", KernelKindEnum(self.kind))
        if self.kind is KernelKindEnum.SIGMOID and not self.gamma > 0:
            raise KernelError(f"Sigmoid kernel needs gamma > 0, got {self.gamma}")

    @classmethod
    def sigmoid(cls, gamma: float, coef0: float = 0.0) -> "KernelSpec":
        return cls(kind=KernelKindEnum.SIGMOID, gamma=gamma, coef0=coef0)

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls(kind=KernelKindEnum.LINEAR)

    def apply(self, gram: FloatArray) -> FloatArray:
        """Turn a matrix of inner products into kernel values."""
        if self.kind is KernelKindEnum.LINEAR:
            return gram
        return np.tanh(self.gamma * gram + self.coef0)

    def value(self, u: FloatArray, v: FloatArray) -> float:

        return float(self.apply(np.asarray(float(np.dot(u, v)))))

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "gamma": self.gamma, "coef0": self.coef0}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "KernelSpec":
        return cls(
            kind=KernelKindEnum(data["kind"]),
            gamma=float(data.get("gamma", 1.0)),
            coef0=float(data.get("coef0", 0.0)),
        )


def kernel_matrix(spec: KernelSpec, a: npt.ArrayLike, b: npt.ArrayLike) -> FloatArray:
    """Kernel values between every row of ``a`` and every row of ``b``."""
    left = np.atleast_2d(np.asarray(a, dtype=np.float64))
    right = np.atleast_2d(np.asarray(b, dtype=np.float64))
    return spec.apply(left @ right.T)
