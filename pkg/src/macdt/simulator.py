"""Environment, run loop and regret accounting.

Each timestep is plan (if no episode is open), move one edge or hold,
cover, pick eval points, observe, then test the episode termination rule.
GP posteriors change only when an episode closes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .gp import GpState, Kernel, RewardField, sample_prior_field
from .graph import CoverageModel, GridGraph
from .oracle import EXACT_BUDGET
from . import _backend
from .policy import Policy, PolicyConfig, select_eval_point

# obstacle layout for the 8x8 safe-exploration scenario: two offset walls
FIG3_HAZARDS_8X8 = tuple(r * 8 + 2 for r in range(0, 5)) + tuple(r * 8 + 5 for r in range(3, 8))
FIG3_SEED_8X8 = tuple(r * 8 + c for r in range(5, 8) for c in range(0, 2))

REWARD_FAMILIES = ("gp-sample", "normal", "uniform", "sparse", "file")


@dataclass(frozen=True)
class SafetySpec:
    """Safety GP settings and the known-safe seed vertices."""

    seed_vertices: tuple[int, ...]
    kernel: Kernel = Kernel("se", 1.0, 0.2)
    noise_var: float = 0.0
    prior_mean: float = 0.0


@dataclass(frozen=True, eq=False)
class Environment:
    graph: GridGraph
    coverage: CoverageModel
    field: RewardField
    noise_var: float
    horizon: int
    start: tuple[int, ...]
    kernel: Kernel = Kernel()
    prior_mean: float | np.ndarray = 0.0  # constant or per-vertex
    safety: SafetySpec | None = None
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidArgumentError("horizon T must be at least 1")
        if self.noise_var < 0:
            raise InvalidArgumentError("noise variance must be non-negative")
        if len(self.start) != self.coverage.n_agents:
            raise InvalidArgumentError("one start vertex per agent is required")
        if self.field.values.shape != (self.graph.vertex_count,):
            raise InvalidArgumentError("reward field does not match the graph")
        for v in self.start:
            self.graph.check_vertex(v)


@dataclass(frozen=True)
class Reference:
    value: float
    exact: bool


@dataclass
class RunTrace:
    """Per-step and per-episode record of one run."""

    policy: str
    seed: int
    n_vertices: int
    n_agents: int
    cap: int
    diameter: int
    alpha: float
    optimal_value: float
    reference_exact: bool
    positions: list[tuple[int, ...]] = field(default_factory=list)
    covered_value: list[float] = field(default_factory=list)
    covered_size: list[int] = field(default_factory=list)
    eval_vertices: list[tuple[int, ...]] = field(default_factory=list)
    eval_values: list[tuple[float, ...]] = field(default_factory=list)
    episode: list[int] = field(default_factory=list)
    segments: list[dict] = field(default_factory=list)
    unsafe_visits: int = 0

    @property
    def horizon(self) -> int:
        return len(self.covered_value)

    @property
    def episode_count(self) -> int:
        return self.episode[-1] if self.episode else 0

    def clean_event(self) -> bool:
        return all(s["clean"] for s in self.segments)

    def step_clean(self) -> list[bool]:
        """Clean-event indicator of the segment each step belongs to."""
        out, k = [], -1
        starts = [s["start"] for s in self.segments]
        for t in range(1, self.horizon + 1):
            while k + 1 < len(starts) and starts[k + 1] <= t:
                k += 1
            out.append(bool(self.segments[k]["clean"]))
        return out

    def regret(self, alpha: float | None = None) -> np.ndarray:
        return regret_series(self, self.alpha if alpha is None else alpha)


def regret_series(trace: RunTrace, alpha: float = 1.0) -> np.ndarray:
    """Cumulative ``alpha * opt - covered`` per step (signed)."""
    values = np.asarray(trace.covered_value, dtype=np.float64)
    return np.cumsum(alpha * trace.optimal_value - values)


def observe(env: Environment, vertex: int, rng: np.random.Generator) -> float:
    w = float(env.field.values[vertex])
    if env.noise_var == 0:
        return w
    return w + float(np.sqrt(env.noise_var) * rng.standard_normal())


def optimal_reference(env: Environment, candidates=None) -> Reference:
    """Best achievable coverage value: exhaustive when affordable, else greedy.

    ``candidates`` limits destinations (used for the true safe region).
    """
    cov = env.coverage
    w = np.ascontiguousarray(env.field.values)
    if candidates is None:
        cand = np.arange(env.graph.vertex_count)
    else:
        cand = np.asarray(candidates, dtype=np.int64)
    table = np.ascontiguousarray(cov.table[:, cand, :])
    if cand.size ** cov.n_agents <= EXACT_BUDGET:
        _, value = _backend.exact_search(table, w, cov.homogeneous)
        return Reference(float(value), True)
    _, value = _backend.greedy_search(table, w, np.ones(cand.size, dtype=np.uint8))
    return Reference(float(value), False)


def true_safe_region(env: Environment) -> np.ndarray:
    g = env.field.safety
    safe = np.flatnonzero(g >= 0)
    return env.graph.component(env.start, safe)


def simulate(env: Environment, config: PolicyConfig) -> RunTrace:
    graph, cov = env.graph, env.coverage
    n = graph.vertex_count
    if config.safe and (env.safety is None or env.field.safety is None):
        raise InvalidArgumentError(f"policy {config.kind} needs a safety field and safety spec")

    if config.safe:
        ref = optimal_reference(env, true_safe_region(env))
    else:
        ref = optimal_reference(env)
    trace = RunTrace(
        policy=config.kind, seed=env.seed, n_vertices=n, n_agents=cov.n_agents, cap=cov.cap,
        diameter=graph.diameter(), alpha=config.alpha,
        optimal_value=ref.value, reference_exact=ref.exact,
    )

    rng_w = np.random.default_rng([env.seed, 1])
    rng_g = np.random.default_rng([env.seed, 2])
    gp_w = GpState.prior(env.kernel, graph, env.noise_var, env.prior_mean)
    gp_g = None
    if config.safe:
        s = env.safety
        gp_g = GpState.prior(s.kernel, graph, s.noise_var, s.prior_mean)
    policy = Policy(config, graph, cov, env.safety.seed_vertices if env.safety else ())

    w = env.field.values
    g_true = env.field.safety
    counts = np.zeros(n, dtype=np.int64)
    positions = list(env.start)
    episode = None
    seg_obs, seg_g_obs = [], []
    for t in range(1, env.horizon + 1):
        if episode is None:
            episode = policy.plan(t, positions, gp_w, gp_g, counts)
            clean = bool(np.all(np.abs(w - gp_w.mean) <= episode.beta * gp_w.std))
            trace.segments.append({
                "index": episode.index,
                "phase": episode.phase,
                "start": t,
                "beta": episode.beta,
                "destinations": list(episode.destinations),
                "path_lengths": [len(p) - 1 for p in episode.paths],
                "clean": clean,
            })
        positions = episode.advance()

        union = cov.union(positions)
        evals = []
        for i, p in enumerate(positions):
            v = select_eval_point(cov.cover(i, p), episode.sigma)
            if v not in evals:
                evals.append(v)
        ys = [observe(env, v, rng_w) for v in evals]
        counts[evals] += 1
        seg_obs.extend(zip(evals, ys))
        if gp_g is not None:
            sd = np.sqrt(env.safety.noise_var)
            for i, p in enumerate(positions):
                for u in cov.cover(i, p):
                    y = g_true[u] if sd == 0 else g_true[u] + sd * rng_g.standard_normal()
                    seg_g_obs.append((int(u), float(y)))
        if g_true is not None:
            trace.unsafe_visits += int(sum(g_true[p] < 0 for p in positions))

        trace.positions.append(tuple(int(p) for p in positions))
        trace.covered_value.append(float(w[union].sum()))
        trace.covered_size.append(int(union.size))
        trace.eval_vertices.append(tuple(evals))
        trace.eval_values.append(tuple(ys))
        trace.episode.append(episode.index)

        if policy.finished(episode, counts):
            gp_w = gp_w.update(seg_obs)
            if gp_g is not None:
                gp_g = gp_g.update(seg_g_obs)
            seg_obs, seg_g_obs = [], []
            episode = None
    return trace


def hazard_safety_field(graph: GridGraph, hazards, reach: int = 3, floor: float = -0.2) -> np.ndarray:
    """Safety values rising linearly with hop distance from the nearest
    hazard: ``floor`` on hazards, 1 from ``reach`` hops on.

    A ramp rather than a step keeps the field smooth enough for a
    correlated safety GP not to extrapolate positive values onto hazards.
    """
    hazards = np.asarray(list(hazards), dtype=np.int64)
    if hazards.size == 0:
        return np.ones(graph.vertex_count)
    if reach < 1 or not floor < 0:
        raise InvalidArgumentError("need reach >= 1 and a negative floor")
    d = np.minimum(graph.distances[hazards].min(axis=0), reach).astype(np.float64)
    return floor + (1.0 - floor) * d / reach


def reward_values(family: str, graph: GridGraph, kernel: Kernel, rng: np.random.Generator,
                  sparse_count: int = 4) -> RewardField:
    n = graph.vertex_count
    if family == "gp-sample":
        return sample_prior_field(kernel, graph, rng)
    if family == "normal":
        raw = rng.standard_normal(n)
        shift = -float(raw.min())
        return RewardField(raw + shift, shift=shift)
    if family == "uniform":
        return RewardField(rng.uniform(0.0, 1.0, n))
    if family == "sparse":
        if not 0 < sparse_count <= n:
            raise InvalidArgumentError(f"sparse count must be in 1..{n}")
        values = np.zeros(n)
        values[rng.choice(n, size=sparse_count, replace=False)] = 1.0
        return RewardField(values)
    raise InvalidArgumentError(f"unknown reward family {family!r}")
