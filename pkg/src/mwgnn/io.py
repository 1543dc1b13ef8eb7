"""JSON (de)serialization of graph bundles and atomic file writes."""
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .graph import GraphBundle, build_graph


def bundle_to_dict(b: GraphBundle) -> dict:
    idx = lambda m: np.flatnonzero(m).tolist()
    out = {
        "num_nodes": int(b.num_nodes),
        "edges": b.graph.edges().tolist(),
        "features": b.features.tolist(),
        "labels": b.labels.tolist(),
        "masks": {"train": idx(b.train_mask), "val": idx(b.val_mask), "test": idx(b.test_mask)},
    }
    if b.name != "graph":
        out["name"] = b.name
    if b.meta:
        out["meta"] = b.meta
    return out


def _mask(spec, n, key):
    spec = np.asarray(spec)
    if spec.dtype == bool:
        if spec.shape != (n,):
            raise ValueError(f"mask {key!r} has wrong length")
        return spec
    m = np.zeros(n, dtype=bool)
    if spec.size:
        spec = spec.astype(np.int64)
        if spec.min() < 0 or spec.max() >= n:
            raise ValueError(f"mask {key!r} index out of range")
        m[spec] = True
    return m


def bundle_from_dict(d: dict) -> GraphBundle:
    """Inverse of :func:`bundle_to_dict`; masks may be index lists or booleans."""
    try:
        n = int(d["num_nodes"])
        edges = d["edges"]
        feats = np.asarray(d["features"], dtype=np.float64)
        labels = d["labels"]
        masks = d["masks"]
    except KeyError as e:
        raise ValueError(f"graph bundle is missing field {e}") from None
    if feats.size == 0:
        feats = feats.reshape(n, 0)
    g = build_graph(edges, n)
    return GraphBundle(
        g, feats, labels,
        _mask(masks.get("train", []), n, "train"),
        _mask(masks.get("val", []), n, "val"),
        _mask(masks.get("test", []), n, "test"),
        name=d.get("name", "graph"),
        meta=d.get("meta", {}),
    )


def atomic_write_text(path, text: str):
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def save_bundle(b: GraphBundle, path):
    atomic_write_text(path, dumps(bundle_to_dict(b)))


def load_bundle(path) -> GraphBundle:
    with open(path) as fh:
        return bundle_from_dict(json.load(fh))
