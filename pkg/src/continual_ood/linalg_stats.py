"""Covariance estimation with shrinkage and Mahalanobis geometry.

Conventions used throughout the package:

* covariances are population covariances (divide by N), which keeps N=1
  well defined (zero matrix) and matches the shrinkage-intensity formula;
* shrinkage targets the scaled identity (trace(S)/d) * I;
* Mahalanobis distances are evaluated through a cached Cholesky factor and
  triangular solves, never through an explicit inverse.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from ._kernels import triangular_solve_rows
from .errors import (
    EmptyDatasetError,
    InsufficientDataError,
    InvalidDataError,
    InvalidMatrixError,
    ShapeError,
)

SYM_RTOL = 1e-9
DEGENERATE_EPS = 1e-9


@dataclass(frozen=True)
class GaussianFit:
    """Mean and population covariance of a sample matrix."""

    mean: np.ndarray
    cov: np.ndarray
    n_samples: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ShrunkCovariance:
    """A shrunk covariance matrix together with its lower Cholesky factor.

    ``matrix`` stores the exact convex combination (1-nu)*S + nu*(tr(S)/d)*I.
    ``cholesky`` factors that matrix, possibly after adding a deterministic
    jitter of at most ~1e-6 relative to the trace scale when the exact
    matrix is only positive *semi*-definite.
    """

    matrix: np.ndarray
    nu: float
    cholesky: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def fit_gaussian(samples: np.ndarray) -> GaussianFit:
    """Fit mean and population covariance to an (N, d) sample matrix."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ShapeError(f"expected a 2-D sample matrix, got shape {samples.shape}")
    n, d = samples.shape
    if n == 0:
        raise EmptyDatasetError("cannot fit a Gaussian to zero samples")
    if d == 0:
        raise ShapeError("sample dimensionality must be at least 1")
    if not np.all(np.isfinite(samples)):
        raise InvalidDataError("sample matrix contains non-finite values")
    mean = samples.mean(axis=0)
    centered = samples - mean
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T)
    return GaussianFit(mean=mean, cov=cov, n_samples=n)


def ledoit_wolf_nu(samples: np.ndarray) -> float:
    """Optimal shrinkage intensity toward the scaled identity, in [0, 1].

    Implements the original hyperparameter-free estimator: with S the
    population covariance of the centered rows x_i,

        m    = tr(S) / d
        dd   = ||S - m I||_F^2 / d
        bbar = (1 / (N^2 d)) * sum_i ||x_i x_i^T - S||_F^2
        nu   = min(bbar, dd) / dd

    Zero sample covariance (all rows identical) forces full shrinkage.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ShapeError(f"expected a 2-D sample matrix, got shape {samples.shape}")
    n, d = samples.shape
    if n < 2:
        raise InsufficientDataError(
            f"Ledoit-Wolf shrinkage needs at least 2 samples, got {n}"
        )
    if not np.all(np.isfinite(samples)):
        raise InvalidDataError("sample matrix contains non-finite values")
    centered = samples - samples.mean(axis=0)
    cov = centered.T @ centered / n
    m = np.trace(cov) / d
    delta = np.sum((cov - m * np.eye(d)) ** 2) / d
    if delta <= 0.0:
        return 1.0
    # sum_i ||x_i x_i^T - S||_F^2 = sum_i ||x_i||^4 - N ||S||_F^2
    row_sq = np.einsum("ij,ij->i", centered, centered)
    beta = (np.sum(row_sq**2) - n * np.sum(cov**2)) / (n**2 * d)
    beta = min(max(beta, 0.0), delta)
    return float(beta / delta)


def _lower_cholesky(matrix: np.ndarray, scale: float) -> np.ndarray:
    """Cholesky with escalating deterministic jitter for PSD-singular input."""
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        pass
    jitter = DEGENERATE_EPS * scale
    eye = np.eye(matrix.shape[0])
    for _ in range(4):
        try:
            return np.linalg.cholesky(matrix + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 1000.0
    raise InvalidMatrixError("matrix is not positive semidefinite")


def shrink(sigma: np.ndarray, nu: float) -> ShrunkCovariance:
    """Shrink a covariance toward (tr(S)/d) * I with intensity ``nu``.

    A zero-trace input degenerates to the zero matrix for every ``nu``; it
    is replaced by ``DEGENERATE_EPS * I`` so the factorization stays defined.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise InvalidMatrixError(f"covariance must be square, got shape {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise InvalidDataError("covariance contains non-finite values")
    scale = max(np.max(np.abs(sigma)), 1.0)
    if not np.allclose(sigma, sigma.T, rtol=SYM_RTOL, atol=SYM_RTOL * scale):
        raise InvalidMatrixError("covariance matrix is not symmetric")
    if not 0.0 <= nu <= 1.0:
        raise InvalidMatrixError(f"shrinkage intensity must be in [0, 1], got {nu}")
    d = sigma.shape[0]
    trace = float(np.trace(sigma))
    if trace <= 0.0:
        shrunk = DEGENERATE_EPS * np.eye(d)
    else:
        shrunk = (1.0 - nu) * sigma + nu * (trace / d) * np.eye(d)
        shrunk = 0.5 * (shrunk + shrunk.T)
    factor = _lower_cholesky(shrunk, max(trace / d, DEGENERATE_EPS))
    return ShrunkCovariance(matrix=shrunk, nu=float(nu), cholesky=factor)


def mahalanobis(x: np.ndarray, y: np.ndarray, cov: ShrunkCovariance) -> float:
    """Distance sqrt((x-y)^T C^-1 (x-y)) under the shrunk covariance C."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != (cov.dim,) or y.shape != (cov.dim,):
        raise ShapeError(
            f"expected vectors of length {cov.dim}, got {x.shape} and {y.shape}"
        )
    z = solve_triangular(cov.cholesky, x - y, lower=True, check_finite=False)
    return float(np.linalg.norm(z))


def whiten(points: np.ndarray, cov: ShrunkCovariance) -> np.ndarray:
    """Map points so Euclidean distance equals Mahalanobis distance under C.

    Solves L z = p for the lower factor L of C by per-row forward
    substitution; pairwise Euclidean distances between whitened rows equal
    d_C between the originals, and each row's result does not depend on
    which other rows share the call.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != cov.dim:
        raise ShapeError(
            f"expected points of dimension {cov.dim}, got shape {points.shape}"
        )
    if points.shape[0] == 0:
        return points.copy()
    return triangular_solve_rows(cov.cholesky, points)
