"""Dense reverse-mode autodiff over float64 NumPy arrays, plus Adam.

Tensors record the op that produced them; ``Tensor.backward`` walks the
recorded graph in reverse topological order. Ops are plain functions
(``matmul``, ``tanh``, ``edge_aggregate`` ...) and a few operator overloads.
Every forward result is checked for NaN/Inf.
"""
from __future__ import annotations

import numpy as np

from . import kernels


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf."""


_backward_generation = 0


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "_consumed")

    def __init__(self, data, requires_grad=False, _parents=(), op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad and not _parents else None
        self._parents = _parents
        self._backward = None
        self.op = op
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def backward(self):
        """Populate ``.grad`` of every tensor that this scalar depends on."""
        global _backward_generation
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar tensor")
        if self._consumed:
            raise RuntimeError("backward() already ran on this graph; rebuild it after zero_grad()")
        if not self.requires_grad:
            raise RuntimeError("tensor does not depend on any parameter")
        order = _topo_order(self)
        for t in order:
            if not t.is_leaf:
                t.grad = None
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)
        for t in order:
            if not t.is_leaf:
                t.grad = None  # free intermediate buffers
                t._backward = None
        self._consumed = True
        _backward_generation += 1

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(data, parents, op, backward):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite output in {op}")
    parents = tuple(parents)
    out = Tensor(data, any(p.requires_grad for p in parents), parents, op)
    if out.requires_grad:
        out._backward = backward
    return out


# -- elementwise and linear algebra ------------------------------------------

def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _make(a.data + b.data, (a, b), "add", back)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))
    return _make(a.data - b.data, (a, b), "sub", back)


def mul(a, b):
    """Hadamard product with NumPy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def back(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))
    return _make(a.data * b.data, (a, b), "mul", back)


def scale(a, c: float):
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), "scale", lambda g: _accum(a, g * c))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    def back(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)
    return _make(a.data @ b.data, (a, b), "matmul", back)


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), "tanh", lambda g: _accum(a, g * (1.0 - y * y)))


def sigmoid(a):
    a = as_tensor(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(y, (a,), "sigmoid", lambda g: _accum(a, g * y * (1.0 - y)))


def relu(a):
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), "relu", lambda g: _accum(a, g * pos))


def identity(a):
    return as_tensor(a)


def row_softmax(a):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        _accum(a, y * (g - (g * y).sum(axis=1, keepdims=True)))
    return _make(y, (a,), "row_softmax", back)


def concat_cols(tensors):
    tensors = [as_tensor(t) for t in tensors]
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1 or any(t.data.ndim != 2 for t in tensors):
        raise ValueError("concat_cols needs 2-d tensors with equal row counts")
    widths = np.cumsum([0] + [t.shape[1] for t in tensors])

    def back(g):
        for t, lo, hi in zip(tensors, widths[:-1], widths[1:]):
            if t.requires_grad:
                _accum(t, g[:, lo:hi])
    return _make(np.concatenate([t.data for t in tensors], axis=1), tensors, "concat_cols", back)


def slice_cols(a, lo: int, hi: int):
    a = as_tensor(a)

    def back(g):
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        _accum(a, full)
    return _make(a.data[:, lo:hi].copy(), (a,), "slice_cols", back)


def gather_rows(a, index):
    """Rows ``a[index]``; the backward pass scatter-adds."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accum(a, full)
    return _make(a.data[index], (a,), "gather_rows", back)


def row_mean(a):
    """Mean over rows, giving a 1 x d tensor."""
    a = as_tensor(a)
    n = a.shape[0]
    return _make(a.data.mean(axis=0, keepdims=True), (a,), "row_mean",
                 lambda g: _accum(a, np.broadcast_to(g / n, a.shape)))


def sum_all(a):
    a = as_tensor(a)
    return _make(np.array(a.data.sum()), (a,), "sum",
                 lambda g: _accum(a, np.broadcast_to(g, a.shape)))


def masked_cross_entropy(logits, labels, mask):
    """Mean softmax cross-entropy over the rows selected by ``mask``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.flatnonzero(np.asarray(mask, dtype=bool))
    if len(rows) == 0:
        raise ValueError("cross-entropy mask selects no rows")
    z = logits.data[rows]
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = labels[rows]
    loss = -logp[np.arange(len(rows)), y].mean()

    def back(g):
        p = np.exp(logp)
        p[np.arange(len(rows)), y] -= 1.0
        full = np.zeros_like(logits.data)
        full[rows] = p * (g / len(rows))
        _accum(logits, full)
    return _make(np.array(loss), (logits,), "cross_entropy", back)


# -- graph kernels -------------------------------------------------------------

class EdgeIndex:
    """CSR edge layout shared by the graph ops.

    Row ``i`` lists the sources ``j`` whose messages flow into ``i``. ``reverse``
    maps each edge to its mirror and must be given for symmetric layouts when
    gradients with respect to the source features are needed.
    """

    __slots__ = ("indptr", "indices", "reverse", "rows", "num_nodes")

    def __init__(self, indptr, indices, reverse=None):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.reverse = None if reverse is None else np.asarray(reverse, dtype=np.int64)
        self.num_nodes = len(self.indptr) - 1
        self.rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.indptr))

    @classmethod
    def from_graph(cls, g):
        return cls(g.csr_offsets, g.csr_neighbors, g.reverse_edge)

    @property
    def num_edges(self):
        return len(self.indices)

    def transpose_weights(self, w):
        if self.reverse is None:
            raise ValueError("edge layout has no reverse map")
        return w[self.reverse]


def _edge_vector(w):
    return w.reshape(-1)


def edge_aggregate(ei: EdgeIndex, weights, h):
    """out[i] = sum over edges (i <- j) of weights[e] * h[j]."""
    h = as_tensor(h)
    w = as_tensor(weights)
    wv = _edge_vector(w.data)
    if wv.shape[0] != ei.num_edges:
        raise ValueError(f"edge_aggregate: {wv.shape[0]} weights for {ei.num_edges} edges")
    if h.data.ndim != 2 or h.shape[0] != ei.num_nodes:
        raise ValueError(f"edge_aggregate: features of shape {h.shape} for {ei.num_nodes} nodes")

    def back(g):
        if h.requires_grad:
            _accum(h, kernels.spmm(ei.indptr, ei.indices, ei.transpose_weights(wv), g))
        if w.requires_grad:
            gw = kernels.edge_rowdot(ei.indptr, ei.indices, g, h.data)
            _accum(w, gw.reshape(w.shape))
    out = kernels.spmm(ei.indptr, ei.indices, wv, h.data)
    return _make(out, (w, h), "edge_aggregate", back)


def segment_softmax(ei: EdgeIndex, scores):
    """Softmax of per-edge scores over each destination's incoming edges."""
    s = as_tensor(scores)
    x = _edge_vector(s.data)
    if x.shape[0] != ei.num_edges:
        raise ValueError("segment_softmax: one score per edge expected")
    y = kernels.segment_softmax(ei.indptr, x)

    def back(g):
        _accum(s, kernels.segment_softmax_backward(ei.indptr, y, _edge_vector(g)).reshape(s.shape))
    return _make(y.reshape(s.shape), (s,), "segment_softmax", back)


def gather_dst(ei: EdgeIndex, a):
    """Per edge (i <- j), row ``a[i]``; backward is a segment sum."""
    a = as_tensor(a)

    def back(g):
        _accum(a, kernels.segment_sum(ei.indptr, g))
    return _make(a.data[ei.rows], (a,), "gather_dst", back)


def gather_src(ei: EdgeIndex, a):
    """Per edge (i <- j), row ``a[j]``; backward sums over the mirrored edges."""
    a = as_tensor(a)

    def back(g):
        _accum(a, kernels.segment_sum(ei.indptr, g[ei.reverse]))
    return _make(a.data[ei.indices], (a,), "gather_src", back)


# -- parameters and optimizer ---------------------------------------------------

class ParamStore:
    """Named trainable tensors with seeded initialization."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def glorot_values(self, fan_in: int, fan_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return self.rng.uniform(-limit, limit, size=(fan_in, fan_out))

    def glorot(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        return self.add(name, self.glorot_values(fan_in, fan_out))

    def zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(shape))

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params.items())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def zero_grad(self):
        for t in self._params.values():
            t.zero_grad()

    def state(self) -> dict:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load(self, state: dict):
        for k, v in state.items():
            self._params[k].data = np.array(v, dtype=np.float64)

    def num_values(self):
        return sum(t.data.size for t in self._params.values())


class Adam:
    """Adam with L2 weight decay folded into the gradient before the moments."""

    def __init__(self, params: ParamStore, lr=1e-2, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params}
        self.v = {k: np.zeros_like(t.data) for k, t in params}
        self._seen_generation = _backward_generation

    def step(self):
        if _backward_generation == self._seen_generation:
            raise RuntimeError("Adam.step() called before backward()")
        self._seen_generation = _backward_generation
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for k, p in self.params:
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
