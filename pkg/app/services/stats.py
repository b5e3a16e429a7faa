"""Welch's unequal-variance t-test with Student-t p-values."""
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy import special

from app.core.exceptions import InputError, NumericalError

logger = logging.getLogger(__name__)


class StatsError(InputError):
    code = "stats-error"


class DegenerateVarianceError(NumericalError):
    code = "degenerate-variance"


@dataclass(frozen=True)
class WelchResult:
    """
    Welch test of group A (improved) against group B (nonimproved).

    ``t > 0`` means group A has the larger sample mean.
    """

    t: float
    df: float
    p: float
    mean_a: float
    sd_a: float
    n_a: int
    mean_b: float
    sd_b: float
    n_b: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def student_t_cdf(t: float, df: float) -> float:
    """
    Student-t CDF through the regularized incomplete beta function.

    ``P(T <= t) = 1 - I_x(df/2, 1/2) / 2`` for ``t > 0`` with ``x = df / (df + t^2)``.
    """
    if not df > 0:
        raise StatsError(f"Degrees of freedom must be positive, got {df}")
    if math.isnan(t):
        raise StatsError("t is NaN")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return 1.0 - tail if t > 0 else tail


def two_sided_p(t: float, df: float) -> float:

    if math.isinf(t):
        return 0.0
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return min(max(p, 0.0), 1.0)


def welch_t_from_summary(
    mean_a: float,
    sd_a: float,
    n_a: int,
    mean_b: float,
    sd_b: float,
    n_b: int,
) -> WelchResult:
    """
    Welch statistic from group means, sample SDs (n - 1) and sizes.

    Raises:
        StatsError: a group has fewer than 2 members or a negative SD
        DegenerateVarianceError: both groups have zero variance
    """
    if n_a < 2 or n_b < 2:
        raise StatsError(f"Each group needs at least 2 values, got {n_a} and {n_b}")
    if sd_a < 0 or sd_b < 0:
        raise StatsError("Standard deviations must be non-negative")

    var_a = sd_a * sd_a / n_a
    var_b = sd_b * sd_b / n_b
    pooled = var_a + var_b
    if pooled <= 0.0:
        raise DegenerateVarianceError("Both groups are constant; t is undefined")

    t = (mean_a - mean_b) / math.sqrt(pooled)
    df = pooled * pooled / (var_a * var_a / (n_a - 1) + var_b * var_b / (n_b - 1))
    return WelchResult(
        t=t,
        df=df,
        p=two_sided_p(t, df),
        mean_a=float(mean_a),
        sd_a=float(sd_a),
        n_a=int(n_a),
        mean_b=float(mean_b),
        sd_b=float(sd_b),
        n_b=int(n_b),
    )


def welch_t(a: npt.ArrayLike, b: npt.ArrayLike) -> WelchResult:

    values_a = np.asarray(a, dtype=np.float64).ravel()
    values_b = np.asarray(b, dtype=np.float64).ravel()
    if values_a.size < 2 or values_b.size < 2:
        raise StatsError(
            f"Each group needs at least 2 values, got {values_a.size} and {values_b.size}"
        )
    return welch_t_from_summary(
        float(values_a.mean()),
        float(values_a.std(ddof=1)),
        int(values_a.size),
        float(values_b.mean()),
        float(values_b.std(ddof=1)),
        int(values_b.size),
    )


def welch_table(
    groups: Mapping[str, tuple[Sequence[float], Sequence[float]]],
) -> tuple[dict[str, WelchResult], dict[str, str]]:
    """
    Run Welch's test per feature.

    Args:
        groups: feature name -> (improved values, nonimproved values), in report order

    Returns:
        (results by feature, error message by feature for features that could not be tested)
    """
    results: dict[str, WelchResult] = {}
    failures: dict[str, str] = {}
    for name, (improved, nonimproved) in groups.items():
        try:
            results[name] = welch_t(improved, nonimproved)
        except (StatsError, DegenerateVarianceError) as e:
            logger.warning(f"Welch test skipped for {name}: {e.message}")
            failures[name] = e.code
    return results, failures
