"""Adaptive convolution: per-edge aggregation weights and three-channel layers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .metaweight import LinearParams


@dataclass
class ScoreNetParams:
    """Scalar edge scorer over [destination context || source attribute].

    The first layer is split into a destination part and a source part so it
    can be evaluated per node and gathered per edge.
    """

    w_dst: ad.Tensor
    w_src: ad.Tensor
    b1: ad.Tensor
    w2: ad.Tensor
    b2: ad.Tensor

    @classmethod
    def create(cls, store, prefix, dst_dim, src_dim, hidden_dim):
        # Glorot over the full concatenated input width
        full = store.glorot_values(dst_dim + src_dim, hidden_dim)
        w_dst = store.add(f"{prefix}.w1_dst", full[:dst_dim])
        w_src = store.add(f"{prefix}.w1_src", full[dst_dim:])
        return cls(w_dst, w_src, store.zeros(f"{prefix}.b1", (1, hidden_dim)),
                   store.glorot(f"{prefix}.w2", hidden_dim, 1),
                   store.zeros(f"{prefix}.b2", (1, 1)))

    @property
    def widths(self):
        return self.w_dst.shape[0], self.w_src.shape[0]


def edge_logits(ei: ad.EdgeIndex, dst_in, src_in, p: ScoreNetParams):
    """Raw score per edge (i <- j): MLP([dst_in[i] || src_in[j]])."""
    dst_in, src_in = ad.as_tensor(dst_in), ad.as_tensor(src_in)
    if (dst_in.shape[1], src_in.shape[1]) != p.widths:
        raise ValueError(f"score net expects widths {p.widths}, got {(dst_in.shape[1], src_in.shape[1])}")
    a = dst_in @ p.w_dst
    b = src_in @ p.w_src + p.b1
    hidden = ad.tanh(ad.gather_dst(ei, a) + ad.gather_src(ei, b))
    return hidden @ p.w2 + p.b2


@dataclass
class EdgeScores:
    s_f: ad.Tensor
    s_t: ad.Tensor
    s: ad.Tensor | None = None
    alpha: float | None = None


def decoupled_edge_weights(ei: ad.EdgeIndex, w_meta, x, ldp, psi_f: ScoreNetParams,
                           psi_t: ScoreNetParams) -> EdgeScores:
    """Feature- and topology-conditioned weights, softmax-normalized per destination."""
    raw_f = edge_logits(ei, w_meta, x, psi_f)
    raw_t = edge_logits(ei, w_meta, ldp, psi_t)
    return EdgeScores(ad.segment_softmax(ei, raw_f), ad.segment_softmax(ei, raw_t))


def fuse_weights(scores: EdgeScores, alpha: float) -> EdgeScores:
    """s = alpha * s_f + (1 - alpha) * s_t."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    s = ad.scale(scores.s_f, alpha) + ad.scale(scores.s_t, 1.0 - alpha)
    return EdgeScores(scores.s_f, scores.s_t, s, alpha)


@dataclass
class ChannelEmbeddings:
    h_f0: ad.Tensor
    h_t0: ad.Tensor


def init_channel_embeddings(x, ei: ad.EdgeIndex, fc_f: LinearParams, fc_t: LinearParams):
    """tanh(X W_f + b_f) and tanh(A W_t + b_t), the latter via sparse rows of A."""
    x = ad.as_tensor(x)
    if x.shape[1] != fc_f.w.shape[0]:
        raise ValueError("feature channel width mismatch")
    if fc_t.w.shape[0] != ei.num_nodes:
        raise ValueError("topology channel expects one input row per node")
    h_f0 = ad.tanh(fc_f(x))
    ones = np.ones(ei.num_edges)
    h_t0 = ad.tanh(ad.edge_aggregate(ei, ones, fc_t.w) + fc_t.b)
    return ChannelEmbeddings(h_f0, h_t0)


@dataclass
class ConvLayerParams:
    w: ad.Tensor
    lambda_1: float
    lambda_2: float
    beta: float

    def __post_init__(self):
        check_channel_weights(self.lambda_1, self.lambda_2, self.beta)
        if self.w.shape[0] != self.w.shape[1]:
            raise ValueError("layer transform must be square")


def check_channel_weights(lambda_1, lambda_2, beta):
    if lambda_1 < 0 or lambda_2 < 0 or lambda_1 + lambda_2 >= 1:
        raise ValueError(f"need lambda_1, lambda_2 >= 0 and lambda_1 + lambda_2 < 1 "
                         f"(got {lambda_1}, {lambda_2})")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")


def adaptive_layer(h, ei: ad.EdgeIndex, scores: EdgeScores, ch: ChannelEmbeddings,
                   p: ConvLayerParams, activation=ad.relu):
    """act(M ((1 - beta) I + beta W)) with M = (1-l1-l2) P h + l1 H_f0 + l2 H_t0."""
    if scores.s is None:
        raise ValueError("edge scores must be fused before aggregation")
    h = ad.as_tensor(h)
    if h.shape[1] != p.w.shape[0]:
        raise ValueError("hidden width does not match the layer transform")
    mixed = ad.scale(ad.edge_aggregate(ei, scores.s, h), 1.0 - p.lambda_1 - p.lambda_2)
    if p.lambda_1:
        mixed = mixed + ad.scale(ch.h_f0, p.lambda_1)
    if p.lambda_2:
        mixed = mixed + ad.scale(ch.h_t0, p.lambda_2)
    if p.beta == 0.0:
        out = mixed
    elif p.beta == 1.0:
        out = mixed @ p.w
    else:
        out = ad.scale(mixed, 1.0 - p.beta) + ad.scale(mixed @ p.w, p.beta)
    return activation(out)
