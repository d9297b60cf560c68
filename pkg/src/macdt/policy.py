"""Agent-control policies sharing one episode interface.

A policy turns the current GP posterior(s) and agent positions into an
:class:`EpisodeState` (destinations plus one path per agent) and decides,
after every timestep, whether that episode is over. The simulator owns the
clock, the observations and the GP updates.

Policy kinds
------------
``mac-dt``
    UCB destinations, shortest paths, doubling-trick termination.
``macopt-sp``
    Same planning; the episode ends when every agent has arrived.
``voronoi``
    Two-phase baseline: uncertainty-driven exploration targets, then
    Lloyd-style travel to partition centroids.
``mac-dt-safe``
    MAC-DT with destinations and paths restricted to the pessimistic safe
    set.
``mac-dt-safely-explore``
    As ``mac-dt-safe`` but paths are weighted by the posterior safety mean so
    agents prefer less-certified vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, UnreachableError
from .gp import GpState, posterior_cov_from_counts
from .graph import CoverageModel, GridGraph
from .oracle import GREEDY_RATIO, run_oracle, safe_greedy_oracle

POLICIES = ("mac-dt", "macopt-sp", "voronoi", "mac-dt-safe", "mac-dt-safely-explore")
SAFE_POLICIES = ("mac-dt-safe", "mac-dt-safely-explore")
ORACLES = ("greedy", "exact")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "mac-dt"
    delta: float = 0.1
    alpha: float = GREEDY_RATIO
    oracle: str = "greedy"
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise InvalidArgumentError(f"unknown policy {self.kind!r}; valid: {', '.join(POLICIES)}")
        if self.oracle not in ORACLES:
            raise InvalidArgumentError(f"unknown oracle {self.oracle!r}; valid: {', '.join(ORACLES)}")
        if not 0 < self.delta < 1:
            raise InvalidArgumentError("delta must lie in (0, 1)")
        if not 0 < self.alpha <= 1:
            raise InvalidArgumentError("alpha must lie in (0, 1]")
        if self.beta is not None and self.beta < 0:
            raise InvalidArgumentError("beta override must be non-negative")

    @property
    def safe(self) -> bool:
        return self.kind in SAFE_POLICIES

    @property
    def weighted_paths(self) -> bool:
        return self.kind == "mac-dt-safely-explore"


@dataclass
class EpisodeState:
    """One planning segment.

    ``snapshot`` holds the per-vertex sample counts when the episode
    started; ``sigma`` is the posterior std frozen for eval-point choice.
    """

    index: int
    start: int
    destinations: tuple[int, ...]
    paths: list[list[int]]
    snapshot: np.ndarray
    sigma: np.ndarray
    beta: float
    phase: str = "main"
    ucb: np.ndarray | None = None
    safe_set: np.ndarray | None = None
    cursors: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.cursors:
            self.cursors = [0] * len(self.paths)

    @property
    def positions(self) -> list[int]:
        return [p[c] for p, c in zip(self.paths, self.cursors)]

    def advance(self) -> list[int]:
        """Move every agent one edge along its path (or hold at the end)."""
        for i, path in enumerate(self.paths):
            if self.cursors[i] < len(path) - 1:
                self.cursors[i] += 1
        return self.positions

    def arrived(self) -> bool:
        return all(c == len(p) - 1 for p, c in zip(self.paths, self.cursors))

    def episode_counts(self, counts: np.ndarray) -> np.ndarray:
        return counts - self.snapshot


def beta_schedule(e: int, n_vertices: int, delta: float) -> float:
    """Confidence width ``sqrt(2 log(|V| pi^2 e^2 / (6 delta)))``."""
    if e < 1:
        raise InvalidArgumentError("episode index starts at 1")
    if not 0 < delta < 1:
        raise InvalidArgumentError("delta must lie in (0, 1)")
    return math.sqrt(2.0 * math.log(n_vertices * math.pi**2 * e**2 / (6.0 * delta)))


def ucb_map(mean: np.ndarray, std: np.ndarray, beta: float) -> np.ndarray:
    """Optimistic reward, clamped at zero for the oracle."""
    return np.maximum(np.asarray(mean) + beta * np.asarray(std), 0.0)


def select_eval_point(coverage_set, sigma: np.ndarray) -> int:
    cs = np.asarray(coverage_set, dtype=np.int64)
    if cs.size == 0:
        raise InvalidArgumentError("coverage set is empty")
    order = np.sort(cs)
    return int(order[np.argmax(sigma[order])])


def doubling_triggered(n_now: np.ndarray, n_snapshot: np.ndarray) -> bool:
    n_now = np.asarray(n_now)
    return bool(np.any(n_now >= np.maximum(2 * np.asarray(n_snapshot), 1)))


def macopt_sp_termination(episode: EpisodeState) -> bool:
    return episode.arrived()


def plan_episode_mac_dt(
    gp_state: GpState,
    positions,
    config: PolicyConfig,
    graph: GridGraph,
    cov: CoverageModel,
    index: int = 1,
    start: int = 1,
    counts: np.ndarray | None = None,
) -> EpisodeState:
    beta = config.beta if config.beta is not None else beta_schedule(index, graph.vertex_count, config.delta)
    std = gp_state.std
    ucb = ucb_map(gp_state.mean, std, beta)
    dest = run_oracle(config.oracle, ucb, graph, cov)
    paths = [graph.shortest_path(p, d) for p, d in zip(positions, dest.destinations)]
    snapshot = np.zeros(graph.vertex_count, dtype=np.int64) if counts is None else np.array(counts)
    return EpisodeState(index, start, dest.destinations, paths, snapshot, std, beta, ucb=ucb)


def pessimistic_safe_set(gp_g: GpState, beta_g: float, seed) -> np.ndarray:
    lcb = gp_g.mean - beta_g * gp_g.std
    safe = lcb >= 0
    safe[np.asarray(list(seed), dtype=np.int64)] = True
    return np.flatnonzero(safe)


def plan_episode_safe(
    gp_state_w: GpState,
    gp_state_g: GpState,
    positions,
    config: PolicyConfig,
    graph: GridGraph,
    cov: CoverageModel,
    safe_seed,
    index: int = 1,
    start: int = 1,
    counts: np.ndarray | None = None,
) -> EpisodeState:
    """Safe-restricted planning.

    Destinations come from the greedy oracle limited to the part of the
    pessimistic safe set reachable from the agents; paths stay inside it.
    An agent whose destination is unreachable from its own position holds.
    """
    n = graph.vertex_count
    beta = config.beta if config.beta is not None else beta_schedule(index, n, config.delta)
    beta_g = beta_schedule(index, n, config.delta)
    safe = pessimistic_safe_set(gp_state_g, beta_g, safe_seed)
    reachable = graph.component(positions, safe)
    std = gp_state_w.std
    ucb = ucb_map(gp_state_w.mean, std, beta)
    dest = safe_greedy_oracle(ucb, graph, cov, safe_set=reachable)
    if config.weighted_paths:
        weight = np.maximum(gp_state_g.mean, 0.0)
    else:
        weight = np.ones(n)
    paths = []
    for p, d in zip(positions, dest.destinations):
        try:
            paths.append(graph.weighted_shortest_path(p, d, weight, allowed=reachable))
        except UnreachableError:
            paths.append([int(p)])
    snapshot = np.zeros(n, dtype=np.int64) if counts is None else np.array(counts)
    return EpisodeState(index, start, dest.destinations, paths, snapshot, std, beta,
                        ucb=ucb, safe_set=reachable)


def voronoi_partition(graph: GridGraph, positions, mean: np.ndarray, cov: CoverageModel | None = None):
    """Assign each vertex to its hop-nearest agent (ties to the lower index).

    Returns ``(owner, cost)`` where ``cost`` sums posterior-mean reward over
    owned vertices outside the owner's coverage set. The textbook distance
    marks covered vertices with 1; that would reward leaving mass uncovered,
    so the indicator here is 0 when covered and 1 otherwise.
    """
    pos = np.asarray(positions, dtype=np.int64)
    dist = graph.distances[pos]  # (N, |V|)
    owner = np.argmin(dist, axis=0)
    cost = 0.0
    if cov is not None:
        reward = np.asarray(mean)
        for i, p in enumerate(pos):
            mine = owner == i
            covered = np.zeros(graph.vertex_count, dtype=bool)
            covered[cov.cover(i, p)] = True
            cost += float(reward[mine & ~covered].sum())
    return owner, cost


def voronoi_centroids(graph: GridGraph, cov: CoverageModel, positions, owner: np.ndarray,
                      mean: np.ndarray) -> list[int]:
    """Per-agent vertex of its cell maximising covered posterior mass inside
    the cell; an agent with an empty cell keeps its position."""
    reward = np.maximum(np.asarray(mean), 0.0)
    out = []
    for i, p in enumerate(positions):
        cell = np.flatnonzero(owner == i)
        if cell.size == 0:
            out.append(int(p))
            continue
        in_cell = owner == i
        best_v, best = int(cell[0]), -np.inf
        for v in cell:
            members = cov.cover(i, v)
            mass = float(reward[members[in_cell[members]]].sum())
            if mass > best:
                best_v, best = int(v), mass
        out.append(best_v)
    return out


def voronoi_explore_targets(gp_state: GpState, n_agents: int) -> list[int]:
    """Sequential max-variance targets with imaginary queries.

    After each pick the covariance is conditioned on a reading at that
    vertex; only the variance changes, the mean is untouched.
    """
    counts = gp_state.counts.copy()
    targets = []
    for _ in range(n_agents):
        post = posterior_cov_from_counts(gp_state.prior_cov, counts, gp_state.noise_var)
        sd = np.sqrt(np.clip(np.diag(post), 0.0, None))
        v = int(np.argmax(sd))
        targets.append(v)
        counts[v] += 1
    return targets


class Policy:
    """Stateful planner for one run."""

    def __init__(self, config: PolicyConfig, graph: GridGraph, cov: CoverageModel, safe_seed=()):
        self.config = config
        self.graph = graph
        self.cov = cov
        self.safe_seed = tuple(int(v) for v in safe_seed)
        self._episodes = 0
        self._phase = None
        if config.safe and not self.safe_seed:
            raise InvalidArgumentError("safe policies need a non-empty safe seed set")

    def plan(self, t: int, positions, gp_w: GpState, gp_g: GpState | None, counts) -> EpisodeState:
        kind = self.config.kind
        if kind == "voronoi":
            return self._plan_voronoi(t, positions, gp_w, counts)
        self._episodes += 1
        e = self._episodes
        if self.config.safe:
            if gp_g is None:
                raise InvalidArgumentError("safe policies need a safety GP")
            return plan_episode_safe(gp_w, gp_g, positions, self.config, self.graph, self.cov,
                                     self.safe_seed, e, t, counts)
        return plan_episode_mac_dt(gp_w, positions, self.config, self.graph, self.cov, e, t, counts)

    def _plan_voronoi(self, t, positions, gp_w, counts):
        n = self.graph.vertex_count
        snapshot = np.array(counts)
        if self._phase != "explore":
            self._episodes += 1
            self._phase = "explore"
            dests = voronoi_explore_targets(gp_w, self.cov.n_agents)
        else:
            self._phase = "cover"
            owner, _ = voronoi_partition(self.graph, positions, gp_w.mean, self.cov)
            dests = voronoi_centroids(self.graph, self.cov, positions, owner, gp_w.mean)
        e = self._episodes
        beta = self.config.beta if self.config.beta is not None else beta_schedule(e, n, self.config.delta)
        paths = [self.graph.shortest_path(p, d) for p, d in zip(positions, dests)]
        return EpisodeState(e, t, tuple(dests), paths, snapshot, gp_w.std, beta, phase=self._phase)

    def finished(self, episode: EpisodeState, counts: np.ndarray) -> bool:
        if self.config.kind in ("macopt-sp", "voronoi"):
            return macopt_sp_termination(episode)
        return doubling_triggered(counts, episode.snapshot)

