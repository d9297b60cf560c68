"""Compiled vs NumPy-fallback timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from macdt import _kernels_py
from macdt.graph import CoverageModel, build_grid

try:
    from macdt import _kernels as _compiled
except ImportError:
    _compiled = None


def csr(g):
    indptr = np.zeros(g.vertex_count + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(a) for a in g.adjacency])
    indices = np.array([u for a in g.adjacency for u in a], dtype=np.int64)
    return indptr, indices


def cases():
    rng = np.random.default_rng(0)
    for side in (8, 16):
        g = build_grid(side, side)
        ip, ix = csr(g)
        n = g.vertex_count
        yield f"bfs_distances {side}x{side}", lambda m, ip=ip, ix=ix, n=n: m.bfs_distances(ip, ix, n)
    for side, agents in ((8, 3), (16, 6)):
        g = build_grid(side, side)
        table = np.ascontiguousarray(CoverageModel.uniform(g, agents, 1).table)
        w = rng.uniform(0, 1, g.vertex_count)
        cand = np.ones(g.vertex_count, dtype=np.uint8)
        yield (f"greedy_search {side}x{side} N={agents}",
               lambda m, t=table, w=w, c=cand: m.greedy_search(t, w, c))
    for side, agents in ((6, 3), (8, 3)):
        g = build_grid(side, side)
        table = np.ascontiguousarray(CoverageModel.uniform(g, agents, 1).table)
        w = rng.uniform(0, 1, g.vertex_count)
        yield (f"exact_search {side}x{side} N={agents}",
               lambda m, t=table, w=w: m.exact_search(t, w, True))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the fallback can be timed")
    print(f"{'kernel':<30}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases():
        py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _compiled is None:
            print(f"{name:<30}{py:>12.3f}{'-':>12}{'-':>10}")
            continue
        cy = min(timeit.repeat(lambda: fn(_compiled), number=1, repeat=args.repeat)) * 1e3
        a, b = fn(_kernels_py), fn(_compiled)
        same = all(np.array_equal(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) else np.array_equal(a, b)
        flag = "" if same else "  MISMATCH"
        print(f"{name:<30}{py:>12.3f}{cy:>12.3f}{py / cy:>9.1f}x{flag}")


if __name__ == "__main__":
    main()
