"""Detection metrics and their time-integrated forms.

Orientation convention: higher score means more OOD, and OOD is the
positive class for ranking. The false-positive rate at 95% true-positive
rate admits 95% of ID samples and reports the fraction of OOD samples
that slip under the same threshold.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ShapeError, UndefinedMetricError


@dataclass(frozen=True)
class MetricCurve:
    """A metric value per timestep, timesteps strictly increasing."""

    timesteps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timesteps)
        v = np.asarray(self.values)
        if t.shape != v.shape or t.ndim != 1:
            raise ShapeError("timesteps and values must be equal-length vectors")
        if t.size >= 2 and not np.all(np.diff(t) > 0):
            raise ShapeError("timesteps must be strictly increasing")


def auc(id_scores, ood_scores) -> float:
    """Probability a random OOD score exceeds a random ID score, ties 0.5.

    Computed from midranks, which equals the normalized pairwise count.
    """
    id_scores = np.asarray(id_scores, dtype=np.float64)
    ood_scores = np.asarray(ood_scores, dtype=np.float64)
    if id_scores.size == 0 or ood_scores.size == 0:
        raise UndefinedMetricError("AUC needs at least one score on each side")
    combined = np.concatenate([id_scores, ood_scores])
    ranks = rankdata(combined, method="average")
    n, m = id_scores.size, ood_scores.size
    u = ranks[n:].sum() - m * (m + 1) / 2.0
    return float(u / (n * m))


def fpr_at_tpr(id_scores, ood_scores, tpr: float = 0.95) -> float:
    """Fraction of OOD scores at or below the tpr-quantile of ID scores."""
    id_scores = np.asarray(id_scores, dtype=np.float64)
    ood_scores = np.asarray(ood_scores, dtype=np.float64)
    if id_scores.size == 0 or ood_scores.size == 0:
        raise UndefinedMetricError("FPR@TPR needs at least one score on each side")
    if not 0.0 < tpr <= 1.0:
        raise UndefinedMetricError(f"tpr must be in (0, 1], got {tpr}")
    threshold = np.quantile(id_scores, tpr, method="linear")
    return float(np.mean(ood_scores <= threshold))


def time_area(curve: MetricCurve) -> float:
    """Trapezoidal area under the curve divided by the elapsed time."""
    t = np.asarray(curve.timesteps, dtype=np.float64)
    v = np.asarray(curve.values, dtype=np.float64)
    if t.size < 2:
        raise UndefinedMetricError("time integration needs at least 2 points")
    return float(np.trapezoid(v, t) / (t[-1] - t[0]))
