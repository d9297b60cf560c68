# cython: language_level=3
"""Compiled hot kernels: all-pairs BFS and max-coverage searches.

Semantics match ``_kernels_py`` exactly, including floating-point summation
order, so the backend choice never changes a trace.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double TIE_RTOL = 1e-12


cdef inline bint _beats(double value, double best):
    return value > best + TIE_RTOL * (best if best >= 0 else -best)


def bfs_distances(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices, Py_ssize_t n):
    dist_arr = np.full((n, n), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] dist = dist_arr
    cdef cnp.int64_t* queue = <cnp.int64_t*> malloc(n * sizeof(cnp.int64_t))
    cdef Py_ssize_t src, head, tail, u, v, j
    try:
        for src in range(n):
            dist[src, src] = 0
            queue[0] = src
            head = 0
            tail = 1
            while head < tail:
                u = queue[head]
                head += 1
                for j in range(indptr[u], indptr[u + 1]):
                    v = indices[j]
                    if dist[src, v] < 0:
                        dist[src, v] = dist[src, u] + 1
                        queue[tail] = v
                        tail += 1
    finally:
        free(queue)
    return dist_arr


def greedy_search(const cnp.int64_t[:, :, ::1] cover, const double[::1] w, candidates):
    cdef Py_ssize_t n_agents = cover.shape[0]
    cdef Py_ssize_t n = cover.shape[1]
    cdef Py_ssize_t width = cover.shape[2]
    cdef cnp.uint8_t[::1] cand = np.ascontiguousarray(candidates, dtype=np.uint8)
    # rows may be a candidate subset; entries index the full vertex set
    cdef cnp.uint8_t[::1] covered = np.zeros(w.shape[0], dtype=np.uint8)
    dests_arr = np.empty(n_agents, dtype=np.int64)
    cdef cnp.int64_t[::1] dests = dests_arr
    cdef Py_ssize_t i, v, k, best_v
    cdef cnp.int64_t u
    cdef double g, best, total = 0.0
    for i in range(n_agents):
        best_v = -1
        best = 0.0
        for v in range(n):
            if not cand[v]:
                continue
            g = 0.0
            for k in range(width):
                u = cover[i, v, k]
                if u < 0:
                    break
                if not covered[u]:
                    g += w[u]
            if best_v < 0 or _beats(g, best):
                best_v = v
                best = g
        dests[i] = best_v
        total += best
        for k in range(width):
            u = cover[i, best_v, k]
            if u < 0:
                break
            covered[u] = 1
    return dests_arr, total


def exact_search(const cnp.int64_t[:, :, ::1] cover, const double[::1] w, bint sorted_only):
    cdef Py_ssize_t n_agents = cover.shape[0]
    cdef Py_ssize_t n = cover.shape[1]
    cdef Py_ssize_t width = cover.shape[2]
    cdef Py_ssize_t last = n_agents - 1
    # per-level cover counts and accumulated values for the odometer
    cdef cnp.int32_t[::1] counts = np.zeros(w.shape[0], dtype=np.int32)
    cdef double[::1] base = np.zeros(n_agents + 1, dtype=np.float64)
    cdef cnp.int64_t[::1] idx = np.zeros(max(n_agents, 1), dtype=np.int64)
    best_arr = np.zeros(n_agents, dtype=np.int64)
    cdef cnp.int64_t[::1] best_t = best_arr
    cdef bint have_best = False
    cdef double best = 0.0, g, acc
    cdef Py_ssize_t level, k, v, start, j
    cdef cnp.int64_t u

    level = 0
    idx[0] = 0
    while True:
        if level == last:
            start = idx[last - 1] if (sorted_only and last > 0) else 0
            for v in range(start, n):
                g = 0.0
                for k in range(width):
                    u = cover[last, v, k]
                    if u < 0:
                        break
                    if counts[u] == 0:
                        g += w[u]
                g = base[last] + g
                if not have_best or _beats(g, best):
                    have_best = True
                    best = g
                    for j in range(last):
                        best_t[j] = idx[j]
                    best_t[last] = v
            # backtrack to the deepest prefix level that can advance
            if last == 0:
                break
            level = last - 1
            while True:
                v = idx[level]
                for k in range(width):
                    u = cover[level, v, k]
                    if u < 0:
                        break
                    counts[u] -= 1
                if v + 1 < n:
                    idx[level] = v + 1
                    break
                if level == 0:
                    return best_arr, best
                level -= 1
        # descend: apply prefix level `level` at idx[level]
        v = idx[level]
        acc = base[level]
        for k in range(width):
            u = cover[level, v, k]
            if u < 0:
                break
            if counts[u] == 0:
                acc += w[u]
            counts[u] += 1
        base[level + 1] = acc
        if level + 1 < last:
            idx[level + 1] = v if sorted_only else 0
        level += 1
    return best_arr, best
