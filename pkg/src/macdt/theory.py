"""Runtime checks of the analytical guarantees on recorded runs.

Every check returns a :class:`Check` holding pass/fail and a numeric
margin (bound minus observed, so a non-negative margin means the bound
held). :func:`theory_report` bundles all of them for one run.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidArgumentError, SampleSizeError
from .gp import dominating_diagonal, diagonal_posterior_variance, info_gain, posterior_cov_from_counts, schur_complement
from .simulator import Environment, RunTrace

EIG_TOL = 1e-8
INFO_TOL = 1e-6
GAMMA_EXACT_LIMIT = 10**6
MIN_CLEAN_RUNS = 20


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        # numpy scalars do not serialise; store plain Python values
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "margin", float(self.margin))


def episode_batches(trace: RunTrace) -> list[list[int]]:
    """Eval-sample multiset of each segment, in segment order."""
    return [[v for evals in steps for v in evals] for steps in _segment_steps(trace)]


def _segment_steps(trace: RunTrace) -> list[list[tuple[int, ...]]]:
    starts = [s["start"] for s in trace.segments] + [trace.horizon + 1]
    return [trace.eval_vertices[a - 1:b - 1] for a, b in zip(starts, starts[1:])]


def episode_bound(n_vertices: int, t_last: int) -> float:
    """``|V| (log2(t) + 1)`` with ``t`` the last step of the final episode."""
    if t_last < 1:
        raise InvalidArgumentError("final step must be at least 1")
    return n_vertices * (math.log2(t_last) + 1.0)


def check_episode_bound(trace: RunTrace) -> Check:
    e = trace.episode_count
    bound = episode_bound(trace.n_vertices, trace.horizon)
    return Check("episode_bound", bool(e <= bound), bound - e, {"episodes": e, "bound": bound})


def check_transit(trace: RunTrace) -> Check:
    """Every planned path is at most the graph diameter long."""
    longest = max((max(s["path_lengths"]) for s in trace.segments), default=0)
    return Check("transit", bool(longest <= trace.diameter), float(trace.diameter - longest),
                 {"longest_path": longest, "diameter": trace.diameter})


def _weighted_lambda_max(block: np.ndarray, counts: np.ndarray) -> float:
    # largest eigenvalue of the multiset matrix equals that of D^1/2 B D^1/2
    root = np.sqrt(counts.astype(np.float64))
    m = root[:, None] * block * root[None, :]
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[-1])


def check_episode_eigenvalue(trace: RunTrace, prior_cov: np.ndarray, noise_var: float) -> Check:
    """Largest eigenvalue of the pre-episode posterior over each episode's
    eval multiset stays below the noise variance.

    When a vertex evaluated in the final step of an episode had no earlier
    samples, the final step is left out. The diagonal-prior bound
    ``max_u c_u / (n_u / noise + 1 / kt_u)`` is recorded alongside.
    """
    if not noise_var > 0:
        raise InvalidArgumentError("eigenvalue check needs positive noise variance")
    n = prior_cov.shape[0]
    tilde = np.diag(dominating_diagonal(prior_cov))
    counts = np.zeros(n, dtype=np.int64)
    results, worst = [], np.inf
    for steps in _segment_steps(trace):
        if not steps:
            continue
        final = steps[-1]
        used = steps[:-1] if np.any(counts[list(final)] == 0) else steps
        c = np.zeros(n, dtype=np.int64)
        for evals in used:
            c[list(evals)] += 1
        support = np.flatnonzero(c)
        lam = diag_bound = 0.0
        if support.size:
            post = posterior_cov_from_counts(prior_cov, counts, noise_var)
            lam = _weighted_lambda_max(post[np.ix_(support, support)], c[support])
            diag_bound = max(
                c[u] * diagonal_posterior_variance(tilde[u], int(counts[u]), noise_var) for u in support
            )
        margin = noise_var + EIG_TOL - lam
        worst = min(worst, margin)
        results.append({"lambda_max": lam, "diagonal_bound": diag_bound,
                        "final_step_dropped": len(used) < len(steps)})
        for evals in steps:
            counts[list(evals)] += 1
    worst = float(worst) if results else noise_var
    return Check("episode_eigenvalue", bool(worst >= 0), worst, {"episodes": results})


def check_info_gain_identity(trace: RunTrace, prior_cov: np.ndarray, noise_var: float) -> Check:
    """Total information of all eval samples equals the per-episode sum of
    ``0.5 log det(I + K_batch / noise)`` under the running posterior."""
    n = prior_cov.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    total, everything = 0.0, []
    for batch in episode_batches(trace):
        if not batch:
            continue
        post = posterior_cov_from_counts(prior_cov, counts, noise_var)
        total += info_gain(post, noise_var, batch)
        counts += np.bincount(batch, minlength=n)
        everything.extend(batch)
    if not everything:
        return Check("info_gain_identity", True, INFO_TOL, {"residual": 0.0})
    direct = info_gain(prior_cov, noise_var, everything)
    resid = abs(direct - total)
    return Check("info_gain_identity", bool(resid <= INFO_TOL), INFO_TOL - resid,
                 {"residual": resid, "total": direct})


def check_log_det_trace(trace: RunTrace, prior_cov: np.ndarray, noise_var: float) -> Check:
    """Summed posterior variance at eval points is at most
    ``2 noise / log 2`` times the total information gain.

    As in the eigenvalue check, an episode's final step is skipped when it
    evaluated a vertex with no earlier samples.
    """
    n = prior_cov.shape[0]
    counts = np.zeros(n, dtype=np.int64)
    lhs = 0.0
    for steps in _segment_steps(trace):
        if not steps:
            continue
        post = posterior_cov_from_counts(prior_cov, counts, noise_var)
        var = np.clip(np.diag(post), 0.0, None)
        used = steps[:-1] if np.any(counts[list(steps[-1])] == 0) else steps
        for evals in used:
            lhs += float(var[list(evals)].sum())
        for evals in steps:
            counts[list(evals)] += 1
    everything = [v for evals in trace.eval_vertices for v in evals]
    rhs = 2.0 * noise_var / math.log(2.0) * info_gain(prior_cov, noise_var, everything)
    return Check("log_det_trace", bool(lhs <= rhs + EIG_TOL), rhs - lhs, {"variance_sum": lhs, "bound": rhs})


def clean_event_rate(traces, min_runs: int = MIN_CLEAN_RUNS) -> float:
    traces = list(traces)
    if len(traces) < min_runs:
        raise SampleSizeError(f"clean-event rate needs at least {min_runs} runs, got {len(traces)}")
    return sum(t.clean_event() for t in traces) / len(traces)


def estimate_gamma(prior_cov: np.ndarray, noise_var: float, m: int, method: str = "auto",
                   repeat: bool = True) -> tuple[float, str]:
    """Maximum information gain over ``m`` samples.

    ``repeat`` allows a vertex to be sampled more than once (needed once
    ``m`` exceeds the vertex count). ``method`` is ``"exact"``,
    ``"greedy"`` or ``"auto"`` (exact when the number of candidate sample
    sets is at most one million). Returns ``(value, tag)`` where the tag is
    ``"exact"`` or ``"greedy-lower-bound"``.
    """
    if m < 1:
        raise InvalidArgumentError("sample budget must be at least 1")
    if not noise_var > 0:
        raise InvalidArgumentError("noise variance must be positive")
    n = prior_cov.shape[0]
    if not repeat and m > n:
        raise InvalidArgumentError(f"cannot pick {m} distinct vertices out of {n}")
    n_sets = math.comb(n + m - 1, m) if repeat else math.comb(n, m)
    if method == "auto":
        method = "exact" if n_sets <= GAMMA_EXACT_LIMIT else "greedy"
    if method == "exact":
        if n_sets > GAMMA_EXACT_LIMIT:
            raise InvalidArgumentError(f"{n_sets} candidate sets exceed the enumeration limit")
        combos = itertools.combinations_with_replacement(range(n), m) if repeat \
            else itertools.combinations(range(n), m)
        return max(info_gain(prior_cov, noise_var, c) for c in combos), "exact"
    if method != "greedy":
        raise InvalidArgumentError(f"unknown gamma method {method!r}")
    return _greedy_gamma(prior_cov, noise_var, m, repeat), "greedy-lower-bound"


def _greedy_gamma(prior_cov, noise_var, m, repeat):
    post = np.array(prior_cov, dtype=np.float64)
    taken = np.zeros(post.shape[0], dtype=bool)
    total = 0.0
    for _ in range(m):
        var = np.clip(np.diag(post), 0.0, None)
        if not repeat:
            var = np.where(taken, -1.0, var)
        v = int(np.argmax(var))
        total += 0.5 * math.log1p(var[v] / noise_var)
        taken[v] = True
        col = post[:, v].copy()
        post -= np.outer(col, col) / (col[v] + noise_var)
    return total


@dataclass(frozen=True)
class BoundParams:
    noise_var: float
    gamma: float
    cap: int
    n_vertices: int
    horizon: int
    delta: float
    n_agents: int
    diameter: int
    prior_bound: float
    kappa_max: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise InvalidArgumentError(f"{name} must be positive")


def theorem1_rhs(p: BoundParams) -> dict:
    """Regret bound terms; returns ``{"part1", "part2", "total"}``."""
    log_term = math.log(2.0 * p.n_vertices * math.pi**2 * p.horizon**2 / (3.0 * p.delta))
    part1 = 8.0 * math.sqrt(p.noise_var) * math.sqrt(p.gamma * p.cap * p.n_vertices * p.horizon * log_term)
    switch = p.n_agents * p.diameter * p.cap * p.n_vertices * p.prior_bound * (math.log(p.horizon) + 2.0)
    tail = 2.0 * p.n_vertices * math.sqrt(2.0 * p.n_agents * p.cap * log_term * p.kappa_max)
    part2 = switch + tail
    return {"part1": part1, "part2": part2, "total": part1 + part2}


def bound_params(env: Environment, delta: float, gamma: float) -> BoundParams:
    from .policy import beta_schedule

    n = env.graph.vertex_count
    kappa = np.diag(env.kernel.matrix(env.graph))
    beta1 = beta_schedule(1, n, delta)
    return BoundParams(
        noise_var=env.noise_var, gamma=gamma, cap=env.coverage.cap, n_vertices=n,
        horizon=env.horizon, delta=delta, n_agents=env.coverage.n_agents,
        diameter=env.graph.diameter(),
        prior_bound=float(np.max(env.prior_mean + beta1 * np.sqrt(kappa))),
        kappa_max=float(kappa.max()),
    )


def random_psd(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    a = rng.standard_normal((n, rank or n))
    return a @ a.T


def matrix_lemma_suite(n_max: int = 8, trials: int = 1000, seed: int = 0) -> Check:
    """Randomised Schur-complement monotonicity and log-det interlacing."""
    if not 2 <= n_max <= 8:
        raise InvalidArgumentError("dimension must lie in 2..8")
    if trials < 1:
        raise InvalidArgumentError("need at least one trial")
    rng = np.random.default_rng(seed)
    schur_fail = inter_fail = 0
    worst_schur = worst_inter = np.inf
    for _ in range(trials):
        n = int(rng.integers(2, n_max + 1))
        x = random_psd(rng, n) + 1e-3 * np.eye(n)
        xt = x + random_psd(rng, n, int(rng.integers(1, n + 1)))
        keep = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
        if keep.size < n:
            d = schur_complement(xt, keep) - schur_complement(x, keep)
            m = float(np.linalg.eigvalsh(0.5 * (d + d.T))[0])
            worst_schur = min(worst_schur, m)
            schur_fail += int(m < -1e-8)
        sub = x[np.ix_(keep, keep)]
        gap = np.linalg.slogdet(np.eye(n) + x)[1] - np.linalg.slogdet(np.eye(keep.size) + sub)[1]
        worst_inter = min(worst_inter, float(gap))
        inter_fail += int(gap < -1e-10)
    return Check("matrix_lemmas", bool(schur_fail == 0 and inter_fail == 0),
                 float(min(worst_schur, worst_inter)),
                 {"trials": trials, "schur_failures": schur_fail, "interlacing_failures": inter_fail,
                  "schur_min_eig": float(worst_schur), "interlacing_min_gap": float(worst_inter)})


@dataclass
class TheoryReport:
    checks: list[Check]
    alpha_regret: float
    bound: dict | None = None
    gamma: float | None = None
    gamma_method: str | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "alpha_regret": self.alpha_regret,
            "bound": self.bound,
            "gamma": self.gamma,
            "gamma_method": self.gamma_method,
        }


def theory_report(trace: RunTrace, env: Environment, delta: float = 0.1,
                  with_bound: bool = True) -> TheoryReport:
    """Run every per-trace check; the regret bound uses a greedy estimate
    of the information capacity over ``2 N T`` samples."""
    prior_cov = env.kernel.matrix(env.graph)
    checks = [check_episode_bound(trace), check_transit(trace)]
    if env.noise_var > 0:
        checks += [
            check_episode_eigenvalue(trace, prior_cov, env.noise_var),
            check_info_gain_identity(trace, prior_cov, env.noise_var),
            check_log_det_trace(trace, prior_cov, env.noise_var),
        ]
    alpha_regret = float(trace.regret()[-1])
    report = TheoryReport(checks, alpha_regret)
    if with_bound and env.noise_var > 0:
        m = 2 * env.coverage.n_agents * env.horizon
        gamma, tag = estimate_gamma(prior_cov, env.noise_var, m, method="greedy")
        rhs = theorem1_rhs(bound_params(env, delta, gamma))
        report.bound, report.gamma, report.gamma_method = rhs, gamma, tag
        report.checks.append(Check("regret_bound", bool(alpha_regret <= rhs["total"]),
                                   rhs["total"] - alpha_regret, {"gamma_method": tag}))
    return report
