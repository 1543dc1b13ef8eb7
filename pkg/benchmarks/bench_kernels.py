"""Time the compiled CSR kernels against the NumPy/SciPy fallback.

    python3 benchmarks/bench_kernels.py [--nodes 2000] [--degree 20] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from mwgnn import _kernels_py, kernels
from mwgnn.graph import build_graph


def make_case(n, degree, width, seed=0):
    rng = np.random.default_rng(seed)
    m = n * degree // 2
    g = build_graph(rng.integers(0, n, size=(m, 2)), n)
    ip = g.csr_offsets.astype(np.int64)
    ix = g.csr_neighbors.astype(np.int64)
    e = len(ix)
    return {
        "g": g, "ip": ip, "ix": ix,
        "w": rng.random(e), "x": rng.normal(size=e), "gr": rng.normal(size=e),
        "h": rng.normal(size=(n, width)), "h2": rng.normal(size=(n, width)),
        "v": rng.normal(size=(e, width)),
    }


def kernel_calls(mod, c):
    s = mod.segment_softmax(c["ip"], c["x"])
    return {
        "spmm": lambda: mod.spmm(c["ip"], c["ix"], c["w"], c["h"]),
        "segment_sum": lambda: mod.segment_sum(c["ip"], c["v"]),
        "segment_softmax": lambda: mod.segment_softmax(c["ip"], c["x"]),
        "segment_softmax_backward": lambda: mod.segment_softmax_backward(c["ip"], s, c["gr"]),
        "edge_rowdot": lambda: mod.edge_rowdot(c["ip"], c["ix"], c["h"], c["h2"]),
        "bfs_all_pairs": lambda: mod.bfs_all_pairs(c["ip"], c["ix"]),
    }


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=2000)
    p.add_argument("--degree", type=int, default=20)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    c = make_case(args.nodes, args.degree, args.width)
    print(f"N={args.nodes} directed edges={len(c['ix'])} width={args.width}")
    backends = {"python": _kernels_py}
    if kernels.compiled_available():
        from mwgnn import _kernels
        backends["compiled"] = _kernels
    else:
        print("compiled extension not available; timing the fallback only")
    times = {name: {k: best_of(fn, args.repeat) for k, fn in kernel_calls(mod, c).items()}
             for name, mod in backends.items()}
    head = f"{'kernel':<26}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>10}"
    print(head)
    for k in times["python"]:
        row = f"{k:<26}" + "".join(f"{1000 * times[b][k]:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{times['python'][k] / times['compiled'][k]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
