"""Block-model graphs with Gaussian class features and controllable homophily."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import GraphBundle, build_graph

TRAIN_PER_CLASS = 20
VAL_CAP = 500
TEST_CAP = 1000


def default_class_means(num_classes: int, feature_dim: int, gap: float = 1.0) -> np.ndarray:
    """Class c gets ``gap`` on its own block of coordinates [cF/C, (c+1)F/C)."""
    means = np.zeros((num_classes, feature_dim))
    for c in range(num_classes):
        lo = c * feature_dim // num_classes
        hi = (c + 1) * feature_dim // num_classes
        means[c, lo:hi] = gap
    return means


@dataclass
class SyntheticSpec:
    num_nodes: int
    num_classes: int
    feature_dim: int
    block_matrix: np.ndarray
    class_means: np.ndarray | None = None
    variances: np.ndarray | None = None
    seed: int = 0
    mean_gap: float = 1.0
    noise_variance: float = 1.0

    def __post_init__(self):
        c, f = self.num_classes, self.feature_dim
        self.block_matrix = np.asarray(self.block_matrix, dtype=np.float64)
        if self.class_means is None:
            self.class_means = default_class_means(c, f, self.mean_gap)
        self.class_means = np.asarray(self.class_means, dtype=np.float64)
        if self.variances is None:
            self.variances = np.full(f, float(self.noise_variance))
        self.variances = np.asarray(self.variances, dtype=np.float64).reshape(-1)
        self.validate()

    def validate(self):
        c, f = self.num_classes, self.feature_dim
        if self.num_nodes < 1 or c < 1 or f < 1:
            raise ValueError("num_nodes, num_classes and feature_dim must be positive")
        if c > self.num_nodes:
            raise ValueError("more classes than nodes")
        b = self.block_matrix
        if b.shape != (c, c):
            raise ValueError(f"block matrix must be {c}x{c}")
        if (b < 0).any() or (b > 1).any():
            raise ValueError("block matrix entries must lie in [0, 1]")
        if not np.allclose(b, b.T):
            raise ValueError("block matrix must be symmetric")
        if self.class_means.shape != (c, f):
            raise ValueError(f"class_means must be {c}x{f}")
        if self.variances.shape != (f,) or (self.variances <= 0).any():
            raise ValueError("variances must be F positive numbers")
        if c > 1:
            diff = self.class_means[:, None, :] - self.class_means[None, :, :]
            dist = np.abs(diff).sum(-1) + np.eye(c)
            if (dist == 0).any():
                raise ValueError("class means must be pairwise distinct")

    def to_dict(self):
        return {
            "num_nodes": self.num_nodes,
            "num_classes": self.num_classes,
            "feature_dim": self.feature_dim,
            "block_matrix": self.block_matrix.tolist(),
            "class_means": self.class_means.tolist(),
            "variances": self.variances.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "block_matrix" not in d:
            if "target_h" not in d:
                raise ValueError("spec needs block_matrix or target_h")
            d["block_matrix"] = block_matrix_for_target_h(
                d["num_classes"], d.pop("p_in", 0.05), d.pop("target_h"))
        else:
            d.pop("target_h", None)
            d.pop("p_in", None)
        known = {"num_nodes", "num_classes", "feature_dim", "block_matrix", "class_means",
                 "variances", "seed", "mean_gap", "noise_variance"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown spec fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class CombineSpec:
    spec_1: SyntheticSpec
    spec_2: SyntheticSpec
    cross_edge_prob: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.cross_edge_prob <= 1.0:
            raise ValueError("cross_edge_prob must lie in [0, 1]")
        if self.spec_1.num_classes != self.spec_2.num_classes:
            raise ValueError("combined graphs must share the number of classes")
        if self.spec_1.feature_dim != self.spec_2.feature_dim:
            raise ValueError("combined graphs must share the feature dimension")

    def to_dict(self):
        return {"spec_1": self.spec_1.to_dict(), "spec_2": self.spec_2.to_dict(),
                "cross_edge_prob": self.cross_edge_prob, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(SyntheticSpec.from_dict(d["spec_1"]), SyntheticSpec.from_dict(d["spec_2"]),
                   float(d["cross_edge_prob"]), int(d.get("seed", 0)))


def block_matrix_for_target_h(num_classes: int, p_in: float, target_h: float) -> np.ndarray:
    """Block matrix whose expected edge homophily is ``target_h`` for uniform labels.

    Same-class pairs make up about 1/C of all pairs, so h = p_in / (p_in + (C-1) p_out).
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if not 0.0 < target_h < 1.0:
        raise ValueError("target_h must lie strictly between 0 and 1")
    if not 0.0 < p_in <= 1.0:
        raise ValueError("p_in must lie in (0, 1]")
    p_out = p_in * (1.0 - target_h) / ((num_classes - 1) * target_h)
    if p_out > 1.0:
        raise ValueError(f"target_h={target_h} infeasible with p_in={p_in}: needs p_out={p_out:.4g} > 1")
    b = np.full((num_classes, num_classes), p_out)
    np.fill_diagonal(b, p_in)
    return b


def split_masks(labels: np.ndarray, num_classes: int, rng: np.random.Generator):
    """Train: up to 20 per class; the rest split 1:2 into val/test (capped 500/1000)."""
    n = len(labels)
    train = np.zeros(n, dtype=bool)
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            continue
        take = min(TRAIN_PER_CLASS, max(1, len(members) // 3))
        train[rng.permutation(members)[:take]] = True
    rest = rng.permutation(np.flatnonzero(~train))
    n_val = min(VAL_CAP, len(rest) // 3)
    n_test = min(TEST_CAP, len(rest) - n_val)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[rest[:n_val]] = True
    test[rest[n_val:n_val + n_test]] = True
    return train, val, test


def _sample_block_edges(labels, block, rng):
    n = len(labels)
    out = []
    # pairs (i, j), j > i, drawn row-major so the stream order is fixed
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        hit = rng.random(len(j)) < block[labels[i], labels[j]]
        if hit.any():
            out.append(np.stack([np.full(hit.sum(), i), j[hit]], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def _features(labels, spec, rng):
    noise = rng.standard_normal((len(labels), spec.feature_dim)) * np.sqrt(spec.variances)
    return spec.class_means[labels] + noise


def generate_graph(spec: SyntheticSpec, name: str = "synthetic") -> GraphBundle:
    """Sample labels, features and block-Bernoulli edges; seeded and deterministic."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    labels = rng.integers(0, spec.num_classes, size=spec.num_nodes)
    x = _features(labels, spec, rng)
    edges = _sample_block_edges(labels, spec.block_matrix, rng)
    train, val, test = split_masks(labels, spec.num_classes, rng)
    g = build_graph(edges, spec.num_nodes)
    return GraphBundle(g, x, labels, train, val, test, name=name,
                       meta={"generator": "block", "spec": spec.to_dict()})


def combine_graphs(c: CombineSpec, name: str = "combined") -> GraphBundle:
    """Join two generated graphs and add random cross edges with prob ``cross_edge_prob``."""
    b1 = generate_graph(c.spec_1)
    b2 = generate_graph(c.spec_2)
    n1, n2 = b1.num_nodes, b2.num_nodes
    rng = np.random.default_rng(c.seed)
    hits = rng.random((n1, n2)) < c.cross_edge_prob
    iu, iv = np.nonzero(hits)
    cross = np.stack([iu, iv + n1], axis=1)
    edges = np.concatenate([b1.graph.edges(), b2.graph.edges() + n1, cross])
    labels = np.concatenate([b1.labels, b2.labels])
    x = np.concatenate([b1.features, b2.features])
    num_classes = c.spec_1.num_classes
    train, val, test = split_masks(labels, num_classes, rng)
    g = build_graph(edges, n1 + n2)
    part = np.concatenate([np.zeros(n1, dtype=np.int64), np.ones(n2, dtype=np.int64)])
    return GraphBundle(g, x, labels, train, val, test, name=name,
                       meta={"generator": "combined", "spec": c.to_dict(), "part": part.tolist()})


# Per-half homophily and total edge counts of the two reference combined graphs.
COMBINED_PRESETS = {
    "homo": {"h": (0.5, 0.5), "total_edges": 22937, "combined_h": 0.51},
    "mixed": {"h": (0.10, 0.75), "total_edges": 22705, "combined_h": 0.39},
}


def block_matrix_for_edge_budget(num_nodes: int, num_classes: int, target_h: float,
                                 expected_edges: float) -> np.ndarray:
    """Block matrix giving ``expected_edges`` edges at homophily ``target_h`` for uniform labels."""
    if not 0.0 < target_h < 1.0:
        raise ValueError("target_h must lie strictly between 0 and 1")
    pairs = num_nodes * (num_nodes - 1) / 2.0
    same = pairs / num_classes
    p_in = target_h * expected_edges / same
    p_out = (1.0 - target_h) * expected_edges / (pairs - same)
    if p_in > 1.0 or p_out > 1.0:
        raise ValueError("edge budget infeasible for this many nodes")
    b = np.full((num_classes, num_classes), p_out)
    np.fill_diagonal(b, p_in)
    return b


def combined_preset(kind: str, seed: int = 0, half_nodes: int = 500, num_classes: int = 5,
                    feature_dim: int = 100, cross_edge_prob: float = 0.001,
                    mean_gap: float = 1.0, noise_variance: float = 1.0) -> CombineSpec:
    """CombineSpec shaped like the reference homophilous or mixed combined graph."""
    if kind not in COMBINED_PRESETS:
        raise ValueError(f"unknown preset {kind!r}; choose from {sorted(COMBINED_PRESETS)}")
    preset = COMBINED_PRESETS[kind]
    cross = cross_edge_prob * half_nodes * half_nodes
    inner = preset["total_edges"] - cross
    h1, h2 = preset["h"]
    if h1 == h2:
        share = 0.5
    else:
        # split the edge budget so the edge-weighted homophily hits the reference
        target = (preset["combined_h"] * preset["total_edges"] - cross / num_classes) / inner
        share = float(np.clip((target - h2) / (h1 - h2), 0.05, 0.95))
    specs = []
    for i, (h, frac) in enumerate(zip((h1, h2), (share, 1.0 - share))):
        b = block_matrix_for_edge_budget(half_nodes, num_classes, h, frac * inner)
        specs.append(SyntheticSpec(half_nodes, num_classes, feature_dim, b, seed=2 * seed + i + 1,
                                   mean_gap=mean_gap, noise_variance=noise_variance))
    return CombineSpec(specs[0], specs[1], cross_edge_prob, seed=seed)
