"""Per-node local-distribution encodings fused into the meta-weight matrix.

Three encoders describe each node's k-hop context: a GRU over degree-sorted
LDP rows (topology), a mean or GRU over neighbor features (feature), and a
perceptron over the node's row of hop distances (position). A shared
attention vector mixes them row by row.

Weight matrices follow the row-vector convention ``x @ W`` with ``W`` of
shape (fan_in, fan_out).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import Graph, context_mean, context_sequences

FIELDS = ("t", "f", "p")


@dataclass
class GRUParams:
    """Gate weights act on the concatenation [h, x] (hidden + input rows)."""

    input_dim: int
    hidden_dim: int
    w_u: ad.Tensor
    w_r: ad.Tensor
    w_h: ad.Tensor
    b_u: ad.Tensor
    b_r: ad.Tensor
    b_h: ad.Tensor

    @classmethod
    def create(cls, store: ad.ParamStore, prefix: str, input_dim: int, hidden_dim: int):
        fan_in = hidden_dim + input_dim
        return cls(
            input_dim, hidden_dim,
            store.glorot(f"{prefix}.w_u", fan_in, hidden_dim),
            store.glorot(f"{prefix}.w_r", fan_in, hidden_dim),
            store.glorot(f"{prefix}.w_h", fan_in, hidden_dim),
            store.zeros(f"{prefix}.b_u", (1, hidden_dim)),
            store.zeros(f"{prefix}.b_r", (1, hidden_dim)),
            store.zeros(f"{prefix}.b_h", (1, hidden_dim)),
        )


def gru_step(h, x, p: GRUParams, mask=None):
    """One GRU update for a batch of rows; rows with mask 0 keep ``h``."""
    hx = ad.concat_cols([h, x])
    u = ad.sigmoid(hx @ p.w_u + p.b_u)
    r = ad.sigmoid(hx @ p.w_r + p.b_r)
    cand = ad.tanh(ad.concat_cols([r * h, x]) @ p.w_h + p.b_h)
    gate = u if mask is None else u * mask
    return h + gate * (cand - h)


def _check_steps(steps, p):
    if len(steps) == 0:
        raise ValueError("gru_batch needs at least one step; use gru_encode for empty input")
    for x in steps:
        if x.shape[1] != p.input_dim:
            raise ValueError(f"GRU input width {x.shape[1]} != {p.input_dim}")


def gru_batch_composed(steps, masks, p: GRUParams):
    """Reference GRU built from elementary autodiff ops, one step at a time."""
    _check_steps(steps, p)
    h = ad.Tensor(np.zeros((steps[0].shape[0], p.hidden_dim)))
    for x, m in zip(steps, masks):
        h = gru_step(h, ad.Tensor(x), p, None if m is None else ad.Tensor(m.reshape(-1, 1)))
    return h


def gru_batch(steps, masks, p: GRUParams):
    """Run the GRU over left-padded sequences; ``steps[t]`` is a B x input array.

    Single fused op with hand-written backprop through time. Inputs are
    treated as constants; gradients flow to the GRU parameters only.
    """
    _check_steps(steps, p)
    hd = p.hidden_dim
    wu, wr, wh = p.w_u.data, p.w_r.data, p.w_h.data
    bu, br, bh = p.b_u.data, p.b_r.data, p.b_h.data
    h = np.zeros((steps[0].shape[0], hd))
    tape = []
    for x, m in zip(steps, masks):
        x = np.asarray(x, dtype=np.float64)
        m = None if m is None else np.asarray(m, dtype=np.float64).reshape(-1, 1)
        hx = np.concatenate([h, x], axis=1)
        u = 0.5 * (1.0 + np.tanh(0.5 * (hx @ wu + bu)))
        r = 0.5 * (1.0 + np.tanh(0.5 * (hx @ wr + br)))
        rhx = np.concatenate([r * h, x], axis=1)
        c = np.tanh(rhx @ wh + bh)
        gate = u if m is None else u * m
        tape.append((h, hx, rhx, u, r, c, m))
        h = h + gate * (c - h)
    params = (p.w_u, p.w_r, p.w_h, p.b_u, p.b_r, p.b_h)

    def back(g):
        grads = [np.zeros_like(t.data) for t in params]
        gh = g
        for h0, hx, rhx, u, r, c, m in reversed(tape):
            gate = u if m is None else u * m
            gu = gh * (c - h0)
            if m is not None:
                gu = gu * m
            gzc = gh * gate * (1.0 - c * c)
            gh = gh * (1.0 - gate)
            grads[2] += rhx.T @ gzc
            grads[5] += gzc.sum(axis=0, keepdims=True)
            grh = gzc @ wh[:hd].T
            gh = gh + grh * r
            gzu = gu * u * (1.0 - u)
            gzr = grh * h0 * r * (1.0 - r)
            grads[0] += hx.T @ gzu
            grads[1] += hx.T @ gzr
            grads[3] += gzu.sum(axis=0, keepdims=True)
            grads[4] += gzr.sum(axis=0, keepdims=True)
            gh = gh + gzu @ wu[:hd].T + gzr @ wr[:hd].T
        for t, gt in zip(params, grads):
            ad._accum(t, gt)
    return ad._make(h, params, "gru_batch", back)


def gru_encode(sequence, p: GRUParams):
    """Final hidden state of the GRU run over one sequence from a zero state."""
    seq = [np.asarray(x, dtype=np.float64).reshape(1, -1) for x in sequence]
    if not seq:
        return ad.Tensor(np.zeros((1, p.hidden_dim)))
    return gru_batch(seq, [None] * len(seq), p)


@dataclass
class LinearParams:
    w: ad.Tensor
    b: ad.Tensor

    @classmethod
    def create(cls, store, prefix, fan_in, fan_out):
        return cls(store.glorot(f"{prefix}.w", fan_in, fan_out),
                   store.zeros(f"{prefix}.b", (1, fan_out)))

    def __call__(self, x):
        return x @ self.w + self.b


@dataclass
class PositionNetParams:
    """Two-layer tanh perceptron from a length-N distance row to d_meta."""

    hidden: LinearParams
    out: LinearParams

    @classmethod
    def create(cls, store, prefix, num_nodes, hidden_dim, meta_dim):
        return cls(LinearParams.create(store, f"{prefix}.l1", num_nodes, hidden_dim),
                   LinearParams.create(store, f"{prefix}.l2", hidden_dim, meta_dim))

    @property
    def input_dim(self):
        return self.hidden.w.shape[0]


@dataclass
class AttentionParams:
    q: ad.Tensor    # d_q x 1
    w_a: ad.Tensor  # d_meta x d_q
    b: ad.Tensor    # 1 x d_q

    @classmethod
    def create(cls, store, prefix, meta_dim, att_dim):
        if att_dim <= 0:
            raise ValueError("attention width must be positive")
        return cls(store.glorot(f"{prefix}.q", att_dim, 1),
                   store.glorot(f"{prefix}.w_a", meta_dim, att_dim),
                   store.zeros(f"{prefix}.b", (1, att_dim)))


@dataclass
class MetaWeight:
    dists: dict          # field name -> N x d_meta tensor
    attention: ad.Tensor  # N x len(fields), columns in ``fields`` order
    fields: tuple
    w_meta: ad.Tensor

    @property
    def d_t(self):
        return self.dists.get("t")

    @property
    def d_f(self):
        return self.dists.get("f")

    @property
    def d_p(self):
        return self.dists.get("p")


def _sequence_steps(values, index, mask):
    return [values[index[t]] for t in range(index.shape[0])], [mask[t] for t in range(index.shape[0])]


def topo_distribution(g: Graph, ldp: np.ndarray, k: int, p: GRUParams, contexts=None,
                      max_len: int | None = 64):
    """GRU over each node's degree-sorted context of LDP rows (N x d_meta)."""
    if p.input_dim != ldp.shape[1]:
        raise ValueError("topology GRU input width must match the LDP width")
    index, mask = contexts if contexts is not None else context_sequences(g, k, max_len, tiebreak=ldp)
    return gru_batch(*_sequence_steps(ldp, index, mask), p)


def feature_distribution(g: Graph, x: np.ndarray, k: int, mode: str = "average",
                         proj: LinearParams | None = None, gru: GRUParams | None = None,
                         contexts=None, context_avg=None, max_len: int | None = 64):
    """Neighborhood feature summary: projected k-hop mean, or GRU over sorted rows."""
    if mode == "average":
        if proj is None:
            raise ValueError("average mode needs a projection")
        avg = context_avg if context_avg is not None else context_mean(g, x, k)
        return proj(ad.Tensor(avg))
    if mode == "gru":
        if gru is None:
            raise ValueError("gru mode needs GRU parameters")
        if gru.input_dim != x.shape[1]:
            raise ValueError("feature GRU input width must match the feature width")
        index, mask = (contexts if contexts is not None
                       else context_sequences(g, k, max_len, tiebreak=x))
        return gru_batch(*_sequence_steps(x, index, mask), gru)
    raise ValueError(f"unknown feature mode {mode!r}")


def position_distribution(spd: np.ndarray, p: PositionNetParams):
    """Perceptron over each row of the hop-distance matrix."""
    if spd.shape[1] != p.input_dim:
        raise ValueError(f"position net expects width {p.input_dim}, got {spd.shape[1]}")
    hidden = ad.tanh(p.hidden(ad.Tensor(spd.astype(np.float64))))
    return p.out(hidden)


def attention_scores(d, p: AttentionParams):
    """omega = tanh(D W_a + b) q, one score per row."""
    return ad.tanh(d @ p.w_a + p.b) @ p.q


def attention_integrate(dists: dict, p: AttentionParams, fields=FIELDS) -> MetaWeight:
    """Softmax-weighted sum of the given distributions, per node."""
    fields = tuple(f for f in fields if f in dists)
    if not fields:
        raise ValueError("attention needs at least one distribution")
    shapes = {dists[f].shape for f in fields}
    if len(shapes) != 1:
        raise ValueError(f"distribution shapes differ: {sorted(shapes)}")
    omega = ad.concat_cols([attention_scores(dists[f], p) for f in fields])
    att = ad.row_softmax(omega)
    w_meta = None
    for c, f in enumerate(fields):
        term = ad.slice_cols(att, c, c + 1) * dists[f]
        w_meta = term if w_meta is None else w_meta + term
    return MetaWeight({f: dists[f] for f in fields}, att, fields, w_meta)
