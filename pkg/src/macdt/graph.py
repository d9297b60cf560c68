"""Grid graphs, k-hop coverage sets and shortest paths."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .errors import InvalidArgumentError, UnreachableError

# relative slack used when comparing accumulated float path costs
_COST_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class GridGraph:
    """A ``rows x cols`` 4-neighbour grid.

    Vertex ``row * cols + col`` sits at ``(row, col)``. Adjacency lists are
    sorted ascending, which fixes every tie-break downstream.
    """

    rows: int
    cols: int
    adjacency: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def vertex_count(self) -> int:
        return self.rows * self.cols

    @cached_property
    def coords(self) -> np.ndarray:
        idx = np.arange(self.vertex_count)
        return np.stack([idx // self.cols, idx % self.cols], axis=1)

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs hop distances, ``(|V|, |V|)`` int64."""
        indptr = np.zeros(self.vertex_count + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in self.adjacency])
        indices = np.fromiter(
            (u for a in self.adjacency for u in a), dtype=np.int64, count=int(indptr[-1])
        )
        dist = _backend.bfs_distances(indptr, indices, self.vertex_count)
        dist.setflags(write=False)
        return dist

    @property
    def edge_count(self) -> int:
        """Number of directed edges (each grid edge counted both ways)."""
        return sum(len(a) for a in self.adjacency)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def check_vertex(self, v: int) -> int:
        if not 0 <= v < self.vertex_count:
            raise InvalidArgumentError(f"vertex {v} outside 0..{self.vertex_count - 1}")
        return int(v)

    def k_hop(self, v: int, k: int) -> np.ndarray:
        """Sorted vertices within ``k`` hops of ``v`` (always contains ``v``)."""
        self.check_vertex(v)
        if k < 0:
            raise InvalidArgumentError("hop radius must be non-negative")
        return np.flatnonzero(self.distances[v] <= k)

    def diameter(self) -> int:
        return int(self.distances.max())

    def shortest_path(self, src: int, dst: int) -> list[int]:
        """Minimum-hop path ``src .. dst`` inclusive.

        Among equal-length paths the lexicographically smallest vertex
        sequence is returned: from ``src`` the walk always steps to the
        lowest-index neighbour one hop closer to ``dst``.
        """
        self.check_vertex(src)
        self.check_vertex(dst)
        to_dst = self.distances[:, dst]
        path = [int(src)]
        cur = src
        while cur != dst:
            want = to_dst[cur] - 1
            cur = next(u for u in self.adjacency[cur] if to_dst[u] == want)
            path.append(cur)
        return path

    def weighted_shortest_path(
        self,
        src: int,
        dst: int,
        node_weight: Sequence[float] | np.ndarray,
        allowed: Iterable[int] | None = None,
    ) -> list[int]:
        """Path minimising the summed weight of entered vertices.

        The cost of a path is the sum of ``node_weight`` over every vertex
        after ``src``. Ties are broken by hop count, then lexicographically.
        Only vertices in ``allowed`` (default: all) may be used.

        Raises
        ------
        UnreachableError
            If ``dst`` cannot be reached from ``src`` inside ``allowed``.
        """
        self.check_vertex(src)
        self.check_vertex(dst)
        n = self.vertex_count
        weight = np.asarray(node_weight, dtype=np.float64)
        if weight.shape != (n,):
            raise InvalidArgumentError("node_weight must have one entry per vertex")
        if np.any(weight < 0):
            raise InvalidArgumentError("node weights must be non-negative")
        ok = np.ones(n, dtype=bool)
        if allowed is not None:
            ok[:] = False
            ok[np.fromiter(allowed, dtype=np.int64)] = True
        if not (ok[src] and ok[dst]):
            raise UnreachableError(f"endpoint outside allowed set ({src} -> {dst})")

        # reverse Dijkstra on (cost, hops) from dst: cost-to-go from u
        # includes every vertex entered after u, dst included
        cost = np.full(n, np.inf)
        hops = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        cost[dst], hops[dst] = 0.0, 0
        heap = [(0.0, 0, dst)]
        while heap:
            c, h, x = heapq.heappop(heap)
            if (c, h) > (cost[x], hops[x]):
                continue
            step = c + weight[x]
            for u in self.adjacency[x]:
                if ok[u] and (step, h + 1) < (cost[u], hops[u]):
                    cost[u], hops[u] = step, h + 1
                    heapq.heappush(heap, (step, h + 1, u))
        if not np.isfinite(cost[src]):
            raise UnreachableError(f"{dst} unreachable from {src} within allowed set")

        path = [int(src)]
        cur = src
        while cur != dst:
            target = cost[cur]
            tol = _COST_RTOL * max(1.0, abs(target))
            cur = next(
                u
                for u in self.adjacency[cur]
                if ok[u]
                and hops[u] == hops[cur] - 1
                and abs(weight[u] + cost[u] - target) <= tol
            )
            path.append(cur)
        return path

    def component(self, start: Iterable[int], allowed: Iterable[int]) -> np.ndarray:
        """Sorted vertices of ``allowed`` reachable from ``start`` inside it."""
        ok = np.zeros(self.vertex_count, dtype=bool)
        ok[np.fromiter(allowed, dtype=np.int64)] = True
        seen = np.zeros(self.vertex_count, dtype=bool)
        stack = [int(s) for s in start if ok[s]]
        for s in stack:
            seen[s] = True
        while stack:
            x = stack.pop()
            for u in self.adjacency[x]:
                if ok[u] and not seen[u]:
                    seen[u] = True
                    stack.append(u)
        return np.flatnonzero(seen)


def build_grid(rows: int, cols: int) -> GridGraph:
    if int(rows) != rows or int(cols) != cols or rows < 1 or cols < 1:
        raise InvalidArgumentError(f"grid dimensions must be positive integers, got {rows}x{cols}")
    rows, cols = int(rows), int(cols)
    adjacency = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            nbrs = []
            if r > 0:
                nbrs.append(v - cols)
            if c > 0:
                nbrs.append(v - 1)
            if c < cols - 1:
                nbrs.append(v + 1)
            if r < rows - 1:
                nbrs.append(v + cols)
            adjacency.append(tuple(nbrs))
    return GridGraph(rows, cols, tuple(adjacency))


@dataclass(frozen=True, eq=False)
class CoverageModel:
    """Per-agent hop radii over a fixed graph.

    ``cap`` is the bound K on any single coverage set; it defaults to the
    largest k-hop ball on the graph and is validated if given.
    """

    graph: GridGraph
    radii: tuple[int, ...]
    cap: int = 0

    def __post_init__(self):
        radii = tuple(int(k) for k in self.radii)
        if not radii:
            raise InvalidArgumentError("at least one agent is required")
        if any(k < 0 for k in radii):
            raise InvalidArgumentError("hop radii must be non-negative")
        object.__setattr__(self, "radii", radii)
        largest = int((self.table >= 0).sum(axis=2).max())
        if self.cap == 0:
            object.__setattr__(self, "cap", largest)
        elif self.cap < largest:
            raise InvalidArgumentError(f"cap K={self.cap} below largest coverage set {largest}")

    @classmethod
    def uniform(cls, graph: GridGraph, n_agents: int, radius: int = 1) -> "CoverageModel":
        return cls(graph, (radius,) * n_agents)

    @property
    def n_agents(self) -> int:
        return len(self.radii)

    @property
    def homogeneous(self) -> bool:
        return len(set(self.radii)) == 1

    @cached_property
    def table(self) -> np.ndarray:
        """``(N, |V|, width)`` coverage lists padded with -1."""
        dist = self.graph.distances
        n = self.graph.vertex_count
        width = max(int((dist <= k).sum(axis=1).max()) for k in self.radii)
        out = np.full((len(self.radii), n, width), -1, dtype=np.int64)
        for i, k in enumerate(self.radii):
            for v in range(n):
                members = np.flatnonzero(dist[v] <= k)
                out[i, v, : members.size] = members
        out.setflags(write=False)
        return out

    def cover(self, agent: int, v: int) -> np.ndarray:
        row = self.table[agent, v]
        return row[row >= 0]

    def union(self, positions: Sequence[int]) -> np.ndarray:
        """Sorted union of every agent's coverage set."""
        if len(positions) != self.n_agents:
            raise InvalidArgumentError(f"expected {self.n_agents} positions, got {len(positions)}")
        mask = np.zeros(self.graph.vertex_count, dtype=bool)
        for i, v in enumerate(positions):
            mask[self.cover(i, self.graph.check_vertex(v))] = True
        return np.flatnonzero(mask)


def coverage_union(graph: GridGraph, cov: CoverageModel, positions: Sequence[int]) -> np.ndarray:
    if cov.graph is not graph:
        raise InvalidArgumentError("coverage model was built for a different graph")
    return cov.union(positions)
