"""Pure-Python/NumPy versions of the hot kernels.

These mirror ``_kernels.pyx`` operation for operation, including the
summation order inside coverage sums, so both backends return bit-identical
results on the same inputs.

Coverage tables are ``(n_agents, n_vertices, width)`` integer arrays where
row ``[i, v]`` lists the vertices agent ``i`` covers from ``v`` in ascending
order, padded with ``-1``. The middle axis may be a subset of candidate
vertices; destinations are then positions in that subset.
"""

from collections import deque
from itertools import combinations_with_replacement, product

import numpy as np

TIE_RTOL = 1e-12


def _beats(value, best):
    return value > best + TIE_RTOL * abs(best)


def bfs_distances(indptr, indices, n):
    dist = np.full((n, n), -1, dtype=np.int64)
    for src in range(n):
        row = dist[src]
        row[src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            du = row[u] + 1
            for j in range(indptr[u], indptr[u + 1]):
                v = indices[j]
                if row[v] < 0:
                    row[v] = du
                    queue.append(v)
    return dist


def _padded_weights(w):
    # index -1 reads the trailing zero
    return np.append(np.asarray(w, dtype=np.float64), 0.0)


def _gains(table, wm):
    """Sum of ``wm`` over each coverage row, accumulated slot by slot."""
    gains = np.zeros(table.shape[0], dtype=np.float64)
    for k in range(table.shape[1]):
        gains = gains + wm[table[:, k]]
    return gains


def greedy_search(cover, w, candidates):
    n_agents = cover.shape[0]
    wp = _padded_weights(w)
    # rows may be a candidate subset; entries index the full vertex set
    covered = np.zeros(wp.size, dtype=bool)
    covered[-1] = True
    dests = np.empty(n_agents, dtype=np.int64)
    total = 0.0
    cand = np.flatnonzero(np.asarray(candidates, dtype=bool))
    for i in range(n_agents):
        wm = np.where(covered, 0.0, wp)
        gains = _gains(cover[i], wm)
        best_v, best = -1, -np.inf
        for v in cand:
            g = gains[v]
            if best_v < 0 or _beats(g, best):
                best_v, best = int(v), g
        dests[i] = best_v
        total += best
        row = cover[i, best_v]
        covered[row[row >= 0]] = True
    return dests, total


def _prefix_value(cover, prefix, wp, covered):
    value = 0.0
    for i, v in enumerate(prefix):
        for u in cover[i, v]:
            if u < 0:
                break
            if not covered[u]:
                covered[u] = True
                value += wp[u]
    return value


def exact_search(cover, w, sorted_only):
    """Exhaustive max-coverage; lexicographically smallest optimal tuple.

    The first ``n_agents - 1`` coordinates are enumerated explicitly and the
    last one is scanned as a vector. With ``sorted_only`` (identical coverage
    for every agent) only non-decreasing tuples are visited, which contains
    the lexicographically smallest optimum.
    """
    n_agents, n = cover.shape[0], cover.shape[1]
    wp = _padded_weights(w)
    last = n_agents - 1
    if sorted_only:
        prefixes = combinations_with_replacement(range(n), last)
    else:
        prefixes = product(range(n), repeat=last)
    best_tuple, best = None, -np.inf
    for prefix in prefixes:
        covered = np.zeros(wp.size, dtype=bool)
        covered[-1] = True
        base = _prefix_value(cover, prefix, wp, covered)
        wm = np.where(covered, 0.0, wp)
        values = base + _gains(cover[last], wm)
        start = prefix[-1] if (sorted_only and prefix) else 0
        v = start
        while v < n:
            if best_tuple is None or _beats(values[v], best):
                best_tuple, best = prefix + (v,), values[v]
            # jump to the next strictly better candidate
            ahead = np.flatnonzero(values[v + 1:] > best + TIE_RTOL * abs(best))
            if ahead.size == 0:
                break
            v = v + 1 + int(ahead[0])
    return np.asarray(best_tuple, dtype=np.int64), float(best)
