import os
import subprocess
import sys

import numpy as np
import pytest

from mwgnn import _kernels_py, kernels

from _util import dense_bfs, random_graph

BACKENDS = [_kernels_py]
if kernels.compiled_available():
    from mwgnn import _kernels
    BACKENDS.append(_kernels)


def layout(n=30, p=0.15, seed=0):
    g = random_graph(n, p, seed)
    return g, g.csr_offsets.astype(np.int64), g.csr_neighbors.astype(np.int64)


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def impl(request):
    return request.param


def test_spmm_dense(impl):
    g, ip, ix = layout()
    rng = np.random.default_rng(0)
    w = rng.normal(size=len(ix))
    h = rng.normal(size=(30, 4))
    dense = np.zeros((30, 30))
    dense[g.edge_rows, ix] = w
    assert np.allclose(impl.spmm(ip, ix, w, h), dense @ h, atol=1e-12)


def test_segment_sum(impl):
    g, ip, _ = layout()
    v = np.random.default_rng(1).normal(size=(len(g.csr_neighbors), 3))
    expect = np.zeros((30, 3))
    np.add.at(expect, g.edge_rows, v)
    assert np.allclose(impl.segment_sum(ip, v), expect, atol=1e-12)


def test_segment_softmax(impl):
    g, ip, _ = layout()
    x = np.random.default_rng(2).normal(size=len(g.csr_neighbors)) * 5
    s = impl.segment_softmax(ip, x)
    for i in range(30):
        lo, hi = ip[i], ip[i + 1]
        if hi > lo:
            e = np.exp(x[lo:hi] - x[lo:hi].max())
            assert np.allclose(s[lo:hi], e / e.sum(), atol=1e-14)


def test_segment_softmax_backward(impl):
    g, ip, _ = layout()
    rng = np.random.default_rng(3)
    x = rng.normal(size=len(g.csr_neighbors))
    gr = rng.normal(size=len(x))
    s = impl.segment_softmax(ip, x)
    out = impl.segment_softmax_backward(ip, s, gr)
    for i in range(30):
        lo, hi = ip[i], ip[i + 1]
        if hi > lo:
            si = s[lo:hi]
            jac = np.diag(si) - np.outer(si, si)
            assert np.allclose(out[lo:hi], jac @ gr[lo:hi], atol=1e-14)


def test_edge_rowdot(impl):
    g, ip, ix = layout()
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(30, 5)), rng.normal(size=(30, 5))
    out = impl.edge_rowdot(ip, ix, a, b)
    assert np.allclose(out, np.einsum("ij,ij->i", a[g.edge_rows], b[ix]), atol=1e-12)


def test_bfs(impl):
    g, ip, ix = layout(25, 0.08, seed=7)
    d = impl.bfs_all_pairs(ip, ix)
    a = g.dense_adjacency()
    for v in range(25):
        assert np.array_equal(d[v], dense_bfs(a, v))


def test_empty_rows(impl):
    ip = np.array([0, 0, 1, 1], dtype=np.int64)
    ix = np.array([0], dtype=np.int64)
    h = np.arange(6.0).reshape(3, 2)
    assert impl.spmm(ip, ix, np.array([2.0]), h).tolist() == [[0, 0], [0, 2], [0, 0]]
    assert impl.segment_softmax(ip, np.array([3.0])).tolist() == [1.0]


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_backends_agree_bitwise_on_bfs_and_close_elsewhere():
    g, ip, ix = layout(60, 0.1, seed=11)
    rng = np.random.default_rng(5)
    w = rng.normal(size=len(ix))
    h = rng.normal(size=(60, 7))
    py, cy = BACKENDS
    assert np.array_equal(py.bfs_all_pairs(ip, ix), cy.bfs_all_pairs(ip, ix))
    assert np.allclose(py.spmm(ip, ix, w, h), cy.spmm(ip, ix, w, h), atol=1e-12)
    assert np.allclose(py.segment_softmax(ip, w), cy.segment_softmax(ip, w), atol=1e-14)


def test_read_only_inputs_accepted():
    g, _, _ = layout()
    d = kernels.bfs_all_pairs(g.csr_offsets, g.csr_neighbors)
    assert d.shape == (30, 30)


def test_use_backend_switch():
    prev = kernels.use_backend("python")
    try:
        assert kernels.BACKEND == "python"
        with pytest.raises(ValueError):
            kernels.use_backend("gpu")
    finally:
        if prev == "compiled":
            kernels.use_backend("compiled")
        else:
            kernels.use_backend("python")


def test_env_forces_fallback():
    env = dict(os.environ, MWGNN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import mwgnn; print(mwgnn.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
