"""Hot numeric kernels: triangular whitening and exact k-NN scans.

Two interchangeable backends compute the same quantities:

* numba ``@njit`` kernels (default whenever numba imports), and
* pure-numpy fallbacks.

Selection is controlled by the ``CONTINUAL_OOD_BACKEND`` environment
variable: ``auto`` (default), ``numba`` or ``numpy``.

Both backends process each query/row through a fixed sequence of scalar
operations that does not depend on how many other rows share the batch,
so batch scoring is bitwise identical to scoring rows one at a time.
"""

import os

import numpy as np

_ENV_VAR = "CONTINUAL_OOD_BACKEND"


def _select_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be one of 'auto', 'numba', 'numpy'; got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


_BACKEND = _select_backend()


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return _BACKEND


def _check_knn_args(train: np.ndarray, queries: np.ndarray, k: int) -> None:
    if not 1 <= k <= train.shape[0]:
        raise ValueError(f"k={k} out of range for n={train.shape[0]} training rows")
    if queries.shape[1] != train.shape[1]:
        raise ValueError("train and query dimensionality differ")


def knn_mean_distance_numpy(train: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Mean Euclidean distance from each query to its k nearest train rows.

    Squared distances come from broadcast differences reduced with einsum,
    chunked over queries to bound the (chunk, n, d) intermediate. The k
    smallest distances are summed in ascending order.
    """
    train = np.ascontiguousarray(train, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    _check_knn_args(train, queries, k)
    n, d = train.shape
    chunk = max(1, (1 << 24) // max(n * d, 1))
    out = np.empty(queries.shape[0], dtype=np.float64)
    for start in range(0, queries.shape[0], chunk):
        q = queries[start : start + chunk]
        diff = q[:, None, :] - train[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        smallest = np.partition(d2, k - 1, axis=1)[:, :k]
        smallest.sort(axis=1)
        dists = np.sqrt(smallest)
        acc = dists[:, 0].copy()
        for c in range(1, k):
            acc += dists[:, c]
        out[start : start + q.shape[0]] = acc / k
    return out


def triangular_solve_rows_numpy(lower: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Solve L z_i = r_i for every row r_i by forward substitution.

    The column recurrence applies one fixed scalar sequence per element,
    so each row's solution is independent of the batch around it.
    """
    lower = np.asarray(lower, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    d = lower.shape[0]
    z = np.empty_like(rows)
    for j in range(d):
        acc = rows[:, j].copy()
        for c in range(j):
            acc -= lower[j, c] * z[:, c]
        z[:, j] = acc / lower[j, j]
    return z


if _BACKEND == "numba":
    from numba import njit, prange

    @njit(cache=True, parallel=True)
    def _knn_mean_distance_jit(train, queries, k):  # pragma: no cover - jitted
        n, d = train.shape
        m = queries.shape[0]
        out = np.empty(m, dtype=np.float64)
        for i in prange(m):
            best = np.full(k, np.inf)
            for j in range(n):
                acc = 0.0
                for c in range(d):
                    diff = queries[i, c] - train[j, c]
                    acc += diff * diff
                dist = np.sqrt(acc)
                if dist < best[k - 1]:
                    pos = k - 1
                    while pos > 0 and best[pos - 1] > dist:
                        best[pos] = best[pos - 1]
                        pos -= 1
                    best[pos] = dist
            total = best[0]
            for t in range(1, k):
                total += best[t]
            out[i] = total / k
        return out

    @njit(cache=True, parallel=True)
    def _triangular_solve_rows_jit(lower, rows):  # pragma: no cover - jitted
        m, d = rows.shape
        z = np.empty_like(rows)
        for i in prange(m):
            for j in range(d):
                acc = rows[i, j]
                for c in range(j):
                    acc -= lower[j, c] * z[i, c]
                z[i, j] = acc / lower[j, j]
        return z

    def knn_mean_distance(train: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
        train = np.ascontiguousarray(train, dtype=np.float64)
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        _check_knn_args(train, queries, k)
        if queries.shape[0] == 0:
            return np.empty(0, dtype=np.float64)
        return _knn_mean_distance_jit(train, queries, int(k))

    def triangular_solve_rows(lower: np.ndarray, rows: np.ndarray) -> np.ndarray:
        lower = np.ascontiguousarray(lower, dtype=np.float64)
        rows = np.ascontiguousarray(rows, dtype=np.float64)
        if rows.shape[0] == 0:
            return rows.copy()
        return _triangular_solve_rows_jit(lower, rows)

else:
    knn_mean_distance = knn_mean_distance_numpy
    triangular_solve_rows = triangular_solve_rows_numpy
