"""NumPy/SciPy versions of the CSR kernels, used when the extension is absent."""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path


def _rows(indptr):
    n = len(indptr) - 1
    return np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))


def spmm(indptr, indices, weights, h):
    n = len(indptr) - 1
    a = sp.csr_matrix((weights, indices, indptr), shape=(n, h.shape[0]))
    return np.ascontiguousarray(a @ h)


def segment_sum(indptr, v):
    n = len(indptr) - 1
    e = v.shape[0]
    a = sp.csr_matrix((np.ones(e), np.arange(e, dtype=np.int64), indptr), shape=(n, e))
    return np.ascontiguousarray(a @ v)


def _segment_reduce(ufunc, indptr, x, empty):
    n = len(indptr) - 1
    out = np.full(n, empty, dtype=np.float64)
    starts = np.asarray(indptr[:-1])
    nonempty = np.diff(indptr) > 0
    if x.size:
        out[nonempty] = ufunc.reduceat(x, starts[nonempty])
    return out


def segment_softmax(indptr, x):
    rows = _rows(indptr)
    m = _segment_reduce(np.maximum, indptr, x, 0.0)
    ex = np.exp(x - m[rows])
    total = _segment_reduce(np.add, indptr, ex, 1.0)
    return ex / total[rows]


def segment_softmax_backward(indptr, s, g):
    rows = _rows(indptr)
    dot = _segment_reduce(np.add, indptr, s * g, 0.0)
    return s * (g - dot[rows])


def edge_rowdot(indptr, indices, g, h):
    rows = _rows(indptr)
    return np.einsum("ij,ij->i", g[rows], h[indices])


def bfs_all_pairs(indptr, indices):
    n = len(indptr) - 1
    if n == 0:
        return np.zeros((0, 0), dtype=np.int64)
    a = sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n))
    d = shortest_path(a, method="D", unweighted=True, directed=False)
    out = np.full((n, n), -1, dtype=np.int64)
    finite = np.isfinite(d)
    out[finite] = d[finite].astype(np.int64)
    return out
