"""Inner loops shared by the graph layers and the autodiff engine.

Each kernel has a numpy implementation and a numba one. Both perform the
same floating-point operations in the same order, so their outputs are
bit-identical; ``KRST_NUMBA`` chooses which one the package calls.
"""
import numpy as np

from ._accel import USE_NUMBA, njit


def knn_numpy(x, k, include_self=True):
    """k nearest rows per group by squared Euclidean distance.

    ``x`` has shape (G, n, c). Returns ``(idx, d2)`` of shape (G, n, k),
    neighbors ordered by distance with ties going to the lower index.
    """
    g, n, c = x.shape
    d2 = np.zeros((g, n, n))
    for f in range(c):
        col = x[:, :, f]
        diff = col[:, :, None] - col[:, None, :]
        d2 += diff * diff
    if not include_self:
        d2[:, np.arange(n), np.arange(n)] = np.inf
    order = np.argsort(d2, axis=-1, kind="stable")[:, :, :k]
    return order.astype(np.int64), np.take_along_axis(d2, order, axis=-1)


@njit
def _knn_loops(x, k, include_self):
    g, n, c = x.shape
    idx = np.empty((g, n, k), dtype=np.int64)
    dist = np.empty((g, n, k))
    best_d = np.empty(k)
    best_j = np.empty(k, dtype=np.int64)
    for b in range(g):
        for i in range(n):
            count = 0
            for j in range(n):
                if j == i and not include_self:
                    continue
                acc = 0.0
                for f in range(c):
                    diff = x[b, i, f] - x[b, j, f]
                    acc += diff * diff
                p = count
                while p > 0 and best_d[p - 1] > acc:
                    p -= 1
                if p >= k:
                    continue
                last = count if count < k else k - 1
                q = last
                while q > p:
                    best_d[q] = best_d[q - 1]
                    best_j[q] = best_j[q - 1]
                    q -= 1
                best_d[p] = acc
                best_j[p] = j
                if count < k:
                    count += 1
            for m in range(k):
                idx[b, i, m] = best_j[m]
                dist[b, i, m] = best_d[m]
    return idx, dist


def knn_numba(x, k, include_self=True):
    return _knn_loops(np.ascontiguousarray(x, dtype=np.float64), int(k), bool(include_self))


def scatter_add_rows_numpy(out, idx, src):
    """``out[idx[m]] += src[m]`` for m in order, in place."""
    np.add.at(out, idx, src)
    return out


@njit
def _scatter_loops(out, idx, src):
    m, d = src.shape
    for r in range(m):
        t = idx[r]
        for f in range(d):
            out[t, f] += src[r, f]
    return out


def scatter_add_rows_numba(out, idx, src):
    src = np.ascontiguousarray(src, dtype=np.float64).reshape(len(idx), -1)
    flat = out.reshape(out.shape[0], -1)
    _scatter_loops(flat, np.ascontiguousarray(idx, dtype=np.int64), src)
    return out


if USE_NUMBA:
    knn = knn_numba
    scatter_add_rows = scatter_add_rows_numba
else:
    knn = knn_numpy
    scatter_add_rows = scatter_add_rows_numpy
