import numpy as np
import pytest

from macdt.errors import InvalidArgumentError
from macdt.gp import Kernel, RewardField
from macdt.graph import CoverageModel, build_grid
from macdt.io import build_environment, config_from_dict
from macdt.policy import POLICIES, PolicyConfig
from macdt.simulator import (
    FIG3_HAZARDS_8X8,
    FIG3_SEED_8X8,
    Environment,
    SafetySpec,
    hazard_safety_field,
    observe,
    optimal_reference,
    regret_series,
    reward_values,
    simulate,
    true_safe_region,
)


def line_env(noise=1e-4, horizon=8):
    g = build_grid(1, 3)
    return Environment(g, CoverageModel.uniform(g, 1, 0), RewardField(np.array([0.0, 0.0, 1.0])),
                       noise, horizon, (0,), Kernel("diagonal", 1.0))


def small_env(family="gp-sample", seed=0, horizon=60, n_agents=2, noise=0.1):
    cfg = config_from_dict({
        "grid": {"rows": 5, "cols": 5},
        "agents": {"count": n_agents, "radius": 1},
        "reward": {"family": family},
        "run": {"horizon": horizon, "noise_var": noise},
    })
    return build_environment(cfg, seed)


def test_hand_trace_line_graph():
    tr = simulate(line_env(), PolicyConfig(beta=1.0))
    # all-equal UCB picks vertex 0, then each unvisited vertex in turn, then stays on 2
    assert [p[0] for p in tr.positions] == [0, 1, 2, 2, 2, 2, 2, 2]
    assert tr.covered_value == [0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
    # a vertex's count doubles at t = 3, 4, 6, 10
    assert tr.episode == [1, 2, 3, 4, 5, 5, 6, 6]
    assert tr.optimal_value == 1.0 and tr.reference_exact
    np.testing.assert_allclose(tr.regret(1.0), [1, 2, 2, 2, 2, 2, 2, 2])


def test_horizon_one():
    env = small_env(horizon=1)
    tr = simulate(env, PolicyConfig())
    assert tr.horizon == 1 and tr.episode == [1]
    assert len(tr.segments) == 1
    assert len(tr.regret()) == 1


@pytest.mark.parametrize("kind", ["mac-dt", "macopt-sp", "voronoi"])
def test_determinism(kind):
    a = simulate(small_env(seed=3), PolicyConfig(kind))
    b = simulate(small_env(seed=3), PolicyConfig(kind))
    assert a.positions == b.positions
    assert a.eval_values == b.eval_values
    assert a.covered_value == b.covered_value
    assert a.segments == b.segments
    c = simulate(small_env(seed=4), PolicyConfig(kind))
    assert c.eval_values != a.eval_values


def test_zero_field_gives_zero_regret():
    g = build_grid(4, 4)
    env = Environment(g, CoverageModel.uniform(g, 2, 1), RewardField(np.zeros(16)), 0.0, 30, (0, 15),
                      Kernel("se", 1.0, 0.3))
    tr = simulate(env, PolicyConfig(beta=0.0))
    assert tr.optimal_value == 0.0
    np.testing.assert_array_equal(tr.regret(1.0), np.zeros(30))
    assert tr.clean_event()


def test_noiseless_exact_prior_picks_optimum_immediately():
    # prior variance ~0 with the true map as a constant prior mean: first plan is optimal
    g = build_grid(3, 3)
    cov = CoverageModel.uniform(g, 1, 1)
    env = Environment(g, cov, RewardField(np.full(9, 0.5)), 0.0, 10, (4,), Kernel("diagonal", 1e-12), 0.5)
    tr = simulate(env, PolicyConfig(beta=0.0, oracle="exact"))
    assert tr.positions == [(4,)] * 10
    np.testing.assert_allclose(tr.regret(1.0), np.zeros(10), atol=1e-12)


def test_truth_prior_goes_straight_to_optimum():
    g = build_grid(6, 6)
    cov = CoverageModel.uniform(g, 1, 1)
    w = np.zeros(36)
    w[35] = 1.0
    env = Environment(g, cov, RewardField(w), 0.0, 30, (0,), Kernel("se", 1.0, 0.3), prior_mean=w)
    tr = simulate(env, PolicyConfig(beta=0.0))
    assert tr.optimal_value == 1.0
    # greedy picks the lowest-index vertex covering 35, i.e. 29
    arrive = g.distances[0, 29]
    assert tr.positions[:arrive + 1] == [(v,) for v in g.shortest_path(0, 29)][1:] + [(29,)]
    r = tr.regret(1.0)
    assert arrive <= g.diameter()
    np.testing.assert_array_equal(np.diff(r[arrive - 1:]), 0.0)
    assert r[-1] == arrive - 1


def test_constant_coverage_alpha_regret():
    # agents pinned by a zero-variance prior: R^a(T) = T (a opt - c)
    g = build_grid(1, 4)
    cov = CoverageModel.uniform(g, 1, 0)
    w = np.array([0.5, 0.0, 0.0, 1.0])
    env = Environment(g, cov, RewardField(w), 0.0, 3, (0,), Kernel("diagonal", 1e-300), prior_mean=1.0)
    tr = simulate(env, PolicyConfig(beta=0.0))
    assert tr.positions == [(0,)] * 3
    a = 1 - 1 / np.e
    np.testing.assert_allclose(tr.regret(a), [a - 0.5, 2 * (a - 0.5), 3 * (a - 0.5)])
    assert tr.regret(a)[-1] == pytest.approx(3 * (a * 1.0 - 0.5))


def test_regret_closed_form():
    tr = simulate(small_env(seed=1, horizon=40), PolicyConfig())
    vals = np.array(tr.covered_value)
    np.testing.assert_allclose(regret_series(tr, 1.0), np.cumsum(tr.optimal_value - vals))
    np.testing.assert_allclose(tr.regret(), np.cumsum(tr.alpha * tr.optimal_value - vals))
    assert np.all(vals <= tr.optimal_value + 1e-9)
    assert np.all(np.diff(tr.regret(1.0)) >= -1e-9)


@pytest.mark.parametrize("kind", ["mac-dt", "macopt-sp", "voronoi"])
def test_step_invariants(kind):
    env = small_env(seed=2, horizon=80, n_agents=3)
    tr = simulate(env, PolicyConfig(kind))
    g, cov = env.graph, env.coverage
    prev = env.start
    for t in range(tr.horizon):
        pos = tr.positions[t]
        for a, b in zip(prev, pos):
            assert a == b or b in g.neighbors(a)
        assert tr.covered_size[t] <= cov.n_agents * cov.cap
        ev = tr.eval_vertices[t]
        assert 1 <= len(ev) <= cov.n_agents and len(set(ev)) == len(ev)
        assert set(ev) <= set(cov.union(pos).tolist())
        prev = pos
    assert tr.episode[0] == 1
    assert all(0 <= b - a <= 1 for a, b in zip(tr.episode, tr.episode[1:]))


def test_observe_noise_statistics():
    env = small_env(noise=0.25)
    rng = np.random.default_rng(0)
    ys = np.array([observe(env, 7, rng) for _ in range(100000)])
    w = env.field.values[7]
    assert abs(ys.mean() - w) < 3 * 0.5 / np.sqrt(100000)
    assert abs(ys.var() - 0.25) < 0.01
    exact = small_env(noise=0.0)
    assert observe(exact, 3, rng) == exact.field.values[3]


def test_environment_validation():
    g = build_grid(2, 2)
    cov = CoverageModel.uniform(g, 1, 0)
    f = RewardField(np.ones(4))
    with pytest.raises(InvalidArgumentError):
        Environment(g, cov, f, 0.1, 0, (0,))
    with pytest.raises(InvalidArgumentError):
        Environment(g, cov, f, -0.1, 5, (0,))
    with pytest.raises(InvalidArgumentError):
        Environment(g, cov, f, 0.1, 5, (0, 1))
    with pytest.raises(InvalidArgumentError):
        Environment(g, cov, RewardField(np.ones(3)), 0.1, 5, (0,))
    with pytest.raises(InvalidArgumentError):
        simulate(Environment(g, cov, f, 0.1, 5, (0,)), PolicyConfig("mac-dt-safe"))


def test_reward_families():
    g = build_grid(8, 8)
    k = Kernel()
    for fam in ("gp-sample", "normal", "uniform", "sparse"):
        fld = reward_values(fam, g, k, np.random.default_rng(0))
        assert fld.values.shape == (64,) and fld.values.min() >= 0
    sp = reward_values("sparse", g, k, np.random.default_rng(0), 6)
    assert sorted(set(sp.values)) == [0.0, 1.0] and sp.values.sum() == 6
    assert reward_values("normal", g, k, np.random.default_rng(0)).values.min() == 0.0
    with pytest.raises(InvalidArgumentError):
        reward_values("sparse", g, k, np.random.default_rng(0), 0)
    with pytest.raises(InvalidArgumentError):
        reward_values("lognormal", g, k, np.random.default_rng(0))


def test_optimal_reference_restricted():
    g = build_grid(1, 4)
    cov = CoverageModel.uniform(g, 1, 0)
    env = Environment(g, cov, RewardField(np.array([1.0, 0.0, 0.0, 5.0])), 0.1, 5, (0,))
    assert optimal_reference(env).value == 5.0
    assert optimal_reference(env, [0, 1]).value == 1.0


def test_hazard_field_ramp():
    g = build_grid(1, 6)
    f = hazard_safety_field(g, [0])
    np.testing.assert_allclose(f, [-0.2, 0.2, 0.6, 1.0, 1.0, 1.0])
    np.testing.assert_array_equal(hazard_safety_field(g, []), np.ones(6))
    with pytest.raises(InvalidArgumentError):
        hazard_safety_field(g, [0], reach=0)
    with pytest.raises(InvalidArgumentError):
        hazard_safety_field(g, [0], floor=0.1)


def test_walls_map_layout():
    g = build_grid(8, 8)
    f = hazard_safety_field(g, FIG3_HAZARDS_8X8)
    assert set(np.flatnonzero(f < 0)) == set(FIG3_HAZARDS_8X8)
    assert not set(FIG3_SEED_8X8) & set(FIG3_HAZARDS_8X8)
    # the walls leave one connected safe region
    region = g.component([FIG3_SEED_8X8[0]], np.flatnonzero(f >= 0))
    assert len(region) == 64 - len(FIG3_HAZARDS_8X8)


def safe_env(seed, horizon=80):
    cfg = config_from_dict({
        "grid": {"rows": 8, "cols": 8},
        "run": {"policy": "mac-dt-safely-explore", "horizon": horizon},
        "safety": {"enabled": True, "hazards": "walls"},
    })
    return build_environment(cfg, seed)


@pytest.mark.parametrize("kind", ["mac-dt-safe", "mac-dt-safely-explore"])
def test_safe_policies_never_visit_hazards(kind):
    for seed in range(3):
        env = safe_env(seed)
        assert set(env.start) <= set(FIG3_SEED_8X8)
        tr = simulate(env, PolicyConfig(kind))
        assert tr.unsafe_visits == 0
        region = set(true_safe_region(env).tolist())
        assert all(set(p) <= region for p in tr.positions)


def test_safety_spec_defaults():
    s = SafetySpec((0,))
    assert s.noise_var == 0.0 and s.kernel == Kernel("se", 1.0, 0.2)


def test_all_policies_run():
    for kind in POLICIES:
        env = safe_env(5, horizon=20)
        tr = simulate(env, PolicyConfig(kind))
        assert tr.horizon == 20 and tr.policy == kind
