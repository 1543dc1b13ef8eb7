"""Backend selection for the CSR kernels.

The compiled extension is used when it imports; otherwise the NumPy/SciPy
versions are used. Setting ``MWGNN_PURE_PYTHON=1`` forces the fallback.

Every kernel takes CSR arrays ``indptr``/``indices`` (int64) where row ``i``
lists the sources ``j`` aggregated into destination ``i``.
"""
import os

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("MWGNN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _kernels_py


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def spmm(indptr, indices, weights, h):
    """out[i] = sum over row i of weights[e] * h[indices[e]]."""
    return _impl.spmm(_i64(indptr), _i64(indices), _f64(weights), _f64(h))


def segment_sum(indptr, v):
    """out[i] = sum of v[e] over the edges e of row i."""
    return _impl.segment_sum(_i64(indptr), _f64(v))


def segment_softmax(indptr, x):
    return _impl.segment_softmax(_i64(indptr), _f64(x))


def segment_softmax_backward(indptr, s, g):
    return _impl.segment_softmax_backward(_i64(indptr), _f64(s), _f64(g))


def edge_rowdot(indptr, indices, g, h):
    """Per edge e=(i <- j): dot(g[i], h[j])."""
    return _impl.edge_rowdot(_i64(indptr), _i64(indices), _f64(g), _f64(h))


def bfs_all_pairs(indptr, indices):
    """Hop distances between all node pairs, -1 where unreachable."""
    return _impl.bfs_all_pairs(_i64(indptr), _i64(indices))


def use_backend(name):
    """Switch backend at runtime ("compiled" or "python"); returns the previous name."""
    global _impl, BACKEND
    prev = BACKEND
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        _impl = _compiled
    elif name == "python":
        _impl = _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    return prev


def compiled_available():
    return _compiled is not None
