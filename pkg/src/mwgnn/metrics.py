"""Homophily ratios and Katz centrality."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import Graph, GraphBundle, _check_node


def global_edge_homophily(b: GraphBundle) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    e = b.graph.edges()
    if len(e) == 0:
        raise ValueError("global edge homophily is undefined without edges")
    y = b.labels
    return float(np.mean(y[e[:, 0]] == y[e[:, 1]]))


def local_edge_homophily(b: GraphBundle, v: int) -> float | None:
    """Share of v's neighbors with v's label, or ``None`` for an isolated node."""
    _check_node(b.graph, v)
    nb = b.graph.neighbors(v)
    if len(nb) == 0:
        return None
    return float(np.mean(b.labels[nb] == b.labels[v]))


def local_homophily_vector(b: GraphBundle) -> np.ndarray:
    """All local ratios at once; NaN marks isolated nodes."""
    g = b.graph
    same = (b.labels[g.edge_rows] == b.labels[g.csr_neighbors]).astype(np.float64)
    counts = np.bincount(g.edge_rows, weights=same, minlength=g.num_nodes)
    deg = g.degrees
    out = np.full(g.num_nodes, np.nan)
    np.divide(counts, deg, out=out, where=deg > 0)
    return out


@dataclass
class HomophilyReport:
    global_h: float | None
    local_h: list
    histogram: list
    bin_edges: list
    num_undefined: int

    def to_dict(self):
        return {
            "global_h": self.global_h,
            "local_h": self.local_h,
            "histogram": self.histogram,
            "bin_edges": self.bin_edges,
            "num_undefined": self.num_undefined,
        }


def homophily_report(b: GraphBundle, bins: int = 10) -> HomophilyReport:
    local = local_homophily_vector(b)
    defined = local[~np.isnan(local)]
    hist, edges = np.histogram(defined, bins=bins, range=(0.0, 1.0))
    gh = global_edge_homophily(b) if b.graph.num_edges else None
    return HomophilyReport(
        global_h=gh,
        local_h=[None if math.isnan(x) else float(x) for x in local],
        histogram=hist.tolist(),
        bin_edges=edges.tolist(),
        num_undefined=int(np.isnan(local).sum()),
    )


class KatzDivergence(ArithmeticError):
    pass


def katz_centrality(g: Graph, attenuation: float = 0.1, tol: float = 1e-10,
                    max_iter: int = 1000) -> np.ndarray:
    """Unnormalized Katz scores sum_{m>=1} a^m A^m 1 by fixed-point iteration."""
    if attenuation <= 0:
        raise ValueError("attenuation must be positive")
    n = g.num_nodes
    ones = np.ones(n)
    w = np.ones(g.num_directed)
    x = np.zeros(n)
    prev_delta = math.inf
    growing = 0
    for _ in range(max_iter):
        nxt = attenuation * kernels.spmm(g.csr_offsets, g.csr_neighbors, w, (x + ones)[:, None])[:, 0]
        delta = float(np.max(np.abs(nxt - x))) if n else 0.0
        x = nxt
        if not np.all(np.isfinite(x)):
            raise KatzDivergence("Katz iteration overflowed; attenuation too large")
        if delta <= tol:
            return x
        growing = growing + 1 if delta > prev_delta else 0
        if growing >= 20:
            raise KatzDivergence("Katz iteration diverges; attenuation exceeds 1/spectral radius")
        prev_delta = delta
    raise KatzDivergence(f"Katz iteration did not converge in {max_iter} iterations")
