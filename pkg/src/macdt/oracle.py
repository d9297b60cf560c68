"""Destination oracles for the max-coverage subproblem.

Every oracle takes a non-negative vertex reward vector and returns one
destination per agent. Ties go to the lowest vertex index (greedy) or the
lexicographically smallest tuple (exact).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import _backend
from .errors import InvalidArgumentError, NoSafeDestinationError, SizeLimitError
from .graph import CoverageModel, GridGraph

GREEDY_RATIO = 1.0 - 1.0 / np.e
EXACT_BUDGET = 10**7


@dataclass(frozen=True)
class DestinationSet:
    destinations: tuple[int, ...]
    value: float


def _weights(w, n: int) -> np.ndarray:
    w = np.ascontiguousarray(w, dtype=np.float64)
    if w.shape != (n,):
        raise InvalidArgumentError(f"reward map must have {n} entries")
    return w


def greedy_oracle(w, g: GridGraph, cov: CoverageModel, n_agents: int | None = None) -> DestinationSet:
    """Sequential greedy: agent ``i`` takes the vertex with the largest
    uncovered mass given agents ``0..i-1``."""
    return _greedy(w, g, cov, n_agents, None)


def safe_greedy_oracle(w, g: GridGraph, cov: CoverageModel, n_agents: int | None = None,
                       safe_set: Iterable[int] = ()) -> DestinationSet:
    """Greedy with destinations restricted to ``safe_set``.

    Coverage mass still counts every covered vertex, safe or not.
    """
    safe = np.zeros(g.vertex_count, dtype=bool)
    idx = np.fromiter(safe_set, dtype=np.int64)
    if idx.size == 0:
        raise NoSafeDestinationError("safe set is empty")
    safe[idx] = True
    return _greedy(w, g, cov, n_agents, safe)


def _greedy(w, g, cov, n_agents, candidates) -> DestinationSet:
    _check_agents(cov, n_agents)
    w = _weights(w, g.vertex_count)
    if candidates is None:
        candidates = np.ones(g.vertex_count, dtype=bool)
    dests, value = _backend.greedy_search(cov.table, w, candidates.astype(np.uint8))
    return DestinationSet(tuple(int(v) for v in dests), float(value))


def exact_oracle(w, g: GridGraph, cov: CoverageModel, n_agents: int | None = None,
                 budget: int = EXACT_BUDGET) -> DestinationSet:
    """Globally optimal destinations by enumeration.

    Raises
    ------
    SizeLimitError
        When ``|V| ** N`` exceeds ``budget``.
    """
    _check_agents(cov, n_agents)
    w = _weights(w, g.vertex_count)
    if g.vertex_count ** cov.n_agents > budget:
        raise SizeLimitError(
            f"|V|^N = {g.vertex_count}^{cov.n_agents} exceeds enumeration budget {budget}"
        )
    dests, value = _backend.exact_search(cov.table, w, cov.homogeneous)
    return DestinationSet(tuple(int(v) for v in dests), float(value))


def exact_feasible(g: GridGraph, cov: CoverageModel, budget: int = EXACT_BUDGET) -> bool:
    return g.vertex_count ** cov.n_agents <= budget


def coverage_value(w, cov: CoverageModel, positions) -> float:
    return float(np.asarray(w)[cov.union(positions)].sum())


def run_oracle(kind: str, w, g: GridGraph, cov: CoverageModel) -> DestinationSet:
    if kind == "greedy":
        return greedy_oracle(w, g, cov)
    if kind == "exact":
        return exact_oracle(w, g, cov)
    raise InvalidArgumentError(f"unknown oracle {kind!r}")


def _check_agents(cov: CoverageModel, n_agents):
    if n_agents is not None and n_agents != cov.n_agents:
        raise InvalidArgumentError(
            f"coverage model has {cov.n_agents} agents, oracle asked for {n_agents}"
        )
