"""Inner-loop numeric kernels, JIT-compiled with numba by default.

Every kernel ships in two flavors: a loop-based one compiled with
``numba.njit`` and a vectorized pure-numpy fallback. Set ``NCDLAB_NO_NUMBA=1``
(or uninstall numba) to select the numpy path; ``benchmarks/bench_kernels.py``
times the two against each other.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("NCDLAB_NO_NUMBA", "").strip().lower()
    if flag in ("1", "true", "yes", "on"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _numba_requested()

if NUMBA_ENABLED:
    from numba import njit
else:  # pragma: no cover - exercised via NCDLAB_NO_NUMBA subprocess tests

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


# ---------------------------------------------------------------------------
# Sinkhorn row/column normalization


def _sinkhorn_iterations_np(q: np.ndarray, n_iter: int) -> np.ndarray:
    c, b = q.shape
    q = q / q.sum()
    for _ in range(n_iter):
        q /= q.sum(axis=1, keepdims=True) * c
        q /= q.sum(axis=0, keepdims=True) * b
    return q


@njit(cache=True)
def _sinkhorn_iterations_nb(q: np.ndarray, n_iter: int) -> np.ndarray:
    c, b = q.shape
    total = 0.0
    for i in range(c):
        for j in range(b):
            total += q[i, j]
    for i in range(c):
        for j in range(b):
            q[i, j] /= total
    for _ in range(n_iter):
        for i in range(c):
            rs = 0.0
            for j in range(b):
                rs += q[i, j]
            f = rs * c
            for j in range(b):
                q[i, j] /= f
        for j in range(b):
            cs = 0.0
            for i in range(c):
                cs += q[i, j]
            f = cs * b
            for i in range(c):
                q[i, j] /= f
    return q


def sinkhorn_iterations(q: np.ndarray, n_iter: int) -> np.ndarray:
    """Alternately scale a positive matrix to row sums 1/C and column sums 1/B.

    Rows are normalized first within each iteration, so after the final
    column step the column marginals hold exactly.
    """
    q = np.array(q, dtype=np.float64)
    if NUMBA_ENABLED:
        return _sinkhorn_iterations_nb(q, n_iter)
    return _sinkhorn_iterations_np(q, n_iter)


# ---------------------------------------------------------------------------
# Minimum-cost assignment (Jonker-Volgenant style shortest augmenting path)


@njit(cache=True)
def _assignment_min_cost_nb(cost: np.ndarray) -> np.ndarray:
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    col_row = np.zeros(n + 1, np.int64)  # row matched to column j; 0 = free
    way = np.zeros(n + 1, np.int64)
    for i in range(1, n + 1):
        col_row[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, np.bool_)
        while True:
            used[j0] = True
            i0 = col_row[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[col_row[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if col_row[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            col_row[j0] = col_row[j1]
            j0 = j1
    row_col = np.empty(n, np.int64)
    for j in range(1, n + 1):
        row_col[col_row[j] - 1] = j - 1
    return row_col


def _assignment_min_cost_np(cost: np.ndarray) -> np.ndarray:
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    col_row = np.zeros(n + 1, np.int64)
    way = np.zeros(n + 1, np.int64)
    for i in range(1, n + 1):
        col_row[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, np.bool_)
        while True:
            used[j0] = True
            i0 = col_row[j0]
            free = np.nonzero(~used[1:])[0] + 1
            cur = cost[i0 - 1, free - 1] - u[i0] - v[free]
            better = cur < minv[free]
            minv[free] = np.where(better, cur, minv[free])
            way[free] = np.where(better, j0, way[free])
            k = int(np.argmin(minv[free]))
            delta = minv[free][k]
            j1 = int(free[k])
            u[col_row[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if col_row[j0] == 0:
                break
        while j0 != 0:
            j1 = int(way[j0])
            col_row[j0] = col_row[j1]
            j0 = j1
    row_col = np.empty(n, np.int64)
    for j in range(1, n + 1):
        row_col[col_row[j] - 1] = j - 1
    return row_col


def assignment_min_cost(cost: np.ndarray) -> np.ndarray:
    """Return col index per row of a minimum-total-cost perfect matching."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if cost.shape[0] == 0:
        return np.empty(0, np.int64)
    if NUMBA_ENABLED:
        return _assignment_min_cost_nb(cost)
    return _assignment_min_cost_np(cost)


# ---------------------------------------------------------------------------
# k-means assignment step


@njit(cache=True)
def _assign_points_nb(x: np.ndarray, centroids: np.ndarray):
    n, d = x.shape
    k = centroids.shape[0]
    labels = np.empty(n, np.int64)
    dists = np.empty(n)
    for i in range(n):
        best = 0
        best_d = np.inf
        for c in range(k):
            acc = 0.0
            for j in range(d):
                diff = x[i, j] - centroids[c, j]
                acc += diff * diff
            if acc < best_d:
                best_d = acc
                best = c
        labels[i] = best
        dists[i] = best_d
    return labels, dists


def _assign_points_np(x: np.ndarray, centroids: np.ndarray):
    d2 = (
        (x * x).sum(axis=1)[:, None]
        + (centroids * centroids).sum(axis=1)[None, :]
        - 2.0 * x @ centroids.T
    )
    np.maximum(d2, 0.0, out=d2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(x)), labels]


def assign_points(x: np.ndarray, centroids: np.ndarray):
    """Nearest-centroid labels and squared distances to the chosen centroid."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    if NUMBA_ENABLED:
        return _assign_points_nb(x, centroids)
    return _assign_points_np(x, centroids)


def warmup() -> None:
    """Trigger JIT compilation of all kernels (no-op on the numpy path)."""
    sinkhorn_iterations(np.ones((2, 3)), 1)
    assignment_min_cost(np.eye(2))
    assign_points(np.ones((2, 2)), np.ones((1, 2)))
