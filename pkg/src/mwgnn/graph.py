"""Undirected graphs in CSR form and the structural statistics built on them."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph stored as symmetric CSR.

    Neighbor lists are sorted ascending, with no self-loops or duplicates.
    Treat instances as immutable.
    """

    num_nodes: int
    csr_offsets: np.ndarray
    csr_neighbors: np.ndarray

    def __post_init__(self):
        self.csr_offsets.setflags(write=False)
        self.csr_neighbors.setflags(write=False)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return int(self.csr_offsets[-1]) // 2

    @property
    def num_directed(self) -> int:
        return int(self.csr_offsets[-1])

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_neighbors[self.csr_offsets[v]:self.csr_offsets[v + 1]]

    @cached_property
    def edge_rows(self) -> np.ndarray:
        """Destination node of every stored (directed) edge."""
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees)

    @cached_property
    def reverse_edge(self) -> np.ndarray:
        """Position of edge (j, i) for every stored edge (i, j)."""
        rows, cols = self.edge_rows, self.csr_neighbors
        # sorting by (col, row) lists the reversed edges in CSR order
        return np.lexsort((rows, cols))

    def edges(self) -> np.ndarray:
        """Undirected edge list as an (|E|, 2) array with u < v."""
        rows, cols = self.edge_rows, self.csr_neighbors
        keep = rows < cols
        return np.stack([rows[keep], cols[keep]], axis=1)

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        a[self.edge_rows, self.csr_neighbors] = 1.0
        return a

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.csr_offsets, other.csr_offsets)
            and np.array_equal(self.csr_neighbors, other.csr_neighbors)
        )

    __hash__ = None


def build_graph(edge_list, num_nodes: int) -> Graph:
    """Build a symmetric, deduplicated, loop-free CSR graph from node pairs."""
    num_nodes = int(num_nodes)
    if num_nodes <= 0:
        raise ValueError("num_nodes must be positive")
    e = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= num_nodes):
        raise ValueError(f"edge endpoint out of range for num_nodes={num_nodes}")
    e = e[e[:, 0] != e[:, 1]]
    both = np.concatenate([e, e[:, ::-1]], axis=0)
    if both.size:
        keys = np.unique(both[:, 0] * num_nodes + both[:, 1])
        rows, cols = keys // num_nodes, keys % num_nodes
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
    return Graph(num_nodes, offsets, cols.astype(np.int64))


@dataclass(eq=False)
class GraphBundle:
    """A graph together with node features, labels and split masks."""

    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    name: str = "graph"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.train_mask = np.asarray(self.train_mask, dtype=bool)
        self.val_mask = np.asarray(self.val_mask, dtype=bool)
        self.test_mask = np.asarray(self.test_mask, dtype=bool)
        n = self.graph.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError("features must be an N x F matrix")
        if self.labels.shape != (n,):
            raise ValueError("labels must have one entry per node")
        for m in (self.train_mask, self.val_mask, self.test_mask):
            if m.shape != (n,):
                raise ValueError("masks must have one entry per node")
        if (self.train_mask & self.val_mask).any() or (self.train_mask & self.test_mask).any() \
                or (self.val_mask & self.test_mask).any():
            raise ValueError("train/val/test masks overlap")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite values")

    @property
    def num_nodes(self):
        return self.graph.num_nodes

    @property
    def num_classes(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def num_features(self):
        return self.features.shape[1]


def k_hop_neighbors(g: Graph, v: int, k: int) -> set:
    """All nodes within ``k`` hops of ``v``, including ``v``."""
    _check_node(g, v)
    if k < 0:
        raise ValueError("k must be non-negative")
    seen = {v}
    frontier = [v]
    for _ in range(k):
        nxt = []
        for u in frontier:
            for w in g.neighbors(u):
                w = int(w)
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        if not nxt:
            break
        frontier = nxt
    return seen


def local_degree_profile(g: Graph) -> np.ndarray:
    """Rows [degree, min, max, mean, std] of neighbor degrees; zeros when isolated."""
    deg = g.degrees.astype(np.float64)
    out = np.zeros((g.num_nodes, 5))
    out[:, 0] = deg
    for v in range(g.num_nodes):
        nb = g.neighbors(v)
        if len(nb) == 0:
            continue
        dn = deg[nb]
        out[v, 1:] = dn.min(), dn.max(), dn.mean(), dn.std()
    return out


def shortest_path_matrix(g: Graph, truncation: int | None = None) -> np.ndarray:
    """All-pairs hop distances; -1 for disconnected pairs.

    With ``truncation=r``, finite distances above ``r`` become ``r + 1``.
    """
    d = kernels.bfs_all_pairs(g.csr_offsets, g.csr_neighbors)
    if truncation is not None:
        if truncation < 0:
            raise ValueError("truncation radius must be non-negative")
        d[d > truncation] = truncation + 1
    return d


def _check_node(g, v):
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node {v} out of range [0, {g.num_nodes})")


def _sort_members(members, deg, tiebreak=None):
    members = np.asarray(members, dtype=np.int64)
    keys = [members]
    if tiebreak is not None:
        # later lexsort keys dominate: first column is the most significant
        keys += list(np.asarray(tiebreak)[members].T[::-1])
    keys.append(deg[members])
    return members[np.lexsort(keys)]


def sorted_context(g: Graph, v: int, k: int) -> list:
    """k-hop neighborhood of ``v`` ordered by ascending degree, ties by node id."""
    members = sorted(k_hop_neighbors(g, v, k))
    return _sort_members(members, g.degrees).tolist()


def context_sequences(g: Graph, k: int, max_len: int | None = 64, spd=None, tiebreak=None):
    """Degree-sorted contexts of every node packed for batched recurrence.

    ``tiebreak`` (N x w) orders equal-degree members by their rows before
    falling back to node id. Passing the rows a recurrent encoder will read
    makes its output independent of node labelling.

    Returns ``(index, mask)`` of shape ``(T, N)``. Sequences are left-padded so
    every one ends at the last step; padded slots have mask 0 and index 0.
    Contexts longer than ``max_len`` keep their ``max_len`` highest-degree
    members (the tail of the ascending order).
    """
    if spd is None:
        spd = shortest_path_matrix(g)
    deg = g.degrees
    seqs = []
    for v in range(g.num_nodes):
        row = spd[v]
        members = np.flatnonzero((row >= 0) & (row <= k))
        seq = _sort_members(members, deg, tiebreak)
        if max_len is not None and len(seq) > max_len:
            seq = seq[-max_len:]
        seqs.append(seq)
    t = max(len(s) for s in seqs) if seqs else 0
    index = np.zeros((t, g.num_nodes), dtype=np.int64)
    mask = np.zeros((t, g.num_nodes))
    for v, seq in enumerate(seqs):
        index[t - len(seq):, v] = seq
        mask[t - len(seq):, v] = 1.0
    return index, mask


def context_mean(g: Graph, x: np.ndarray, k: int, spd=None) -> np.ndarray:
    """Row v is the mean of ``x`` over the full k-hop neighborhood of v."""
    if spd is None:
        spd = shortest_path_matrix(g)
    member = ((spd >= 0) & (spd <= k)).astype(np.float64)
    return (member @ x) / member.sum(axis=1, keepdims=True)


def permute_graph(g: Graph, perm) -> Graph:
    """Relabel nodes so old node ``v`` becomes ``perm[v]``."""
    perm = np.asarray(perm, dtype=np.int64)
    e = g.edges()
    return build_graph(perm[e], g.num_nodes)
