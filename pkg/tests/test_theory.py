import itertools
import math

import numpy as np
import pytest

from macdt.errors import InvalidArgumentError, SampleSizeError
from macdt.gp import Kernel, RewardField, info_gain
from macdt.graph import CoverageModel, build_grid
from macdt.io import build_environment, config_from_dict
from macdt.policy import PolicyConfig
from macdt.simulator import Environment, simulate
from macdt.theory import (
    BoundParams,
    Check,
    check_episode_bound,
    check_episode_eigenvalue,
    check_info_gain_identity,
    check_log_det_trace,
    check_transit,
    clean_event_rate,
    episode_batches,
    episode_bound,
    estimate_gamma,
    matrix_lemma_suite,
    theorem1_rhs,
    theory_report,
)


def env_for(rows=4, cols=4, seed=0, horizon=60, n_agents=2, noise=0.1, kind="se", **run):
    cfg = config_from_dict({
        "grid": {"rows": rows, "cols": cols},
        "agents": {"count": n_agents, "radius": 1},
        "kernel": {"kind": kind, "lengthscale": 0.5},
        "run": {"horizon": horizon, "noise_var": noise, **run},
    })
    return build_environment(cfg, seed), cfg


def test_episode_bound_examples():
    assert episode_bound(64, 400) == pytest.approx(64 * (math.log2(400) + 1))
    assert int(episode_bound(64, 400)) == 617
    assert episode_bound(64, 1) == 64.0
    assert episode_bound(1, 8) == 4.0
    with pytest.raises(InvalidArgumentError):
        episode_bound(4, 0)


def test_check_dataclass_serializable():
    c = Check("x", np.bool_(True), 1.0)
    assert c.passed is True


def test_episode_batches_cover_every_step():
    env, _ = env_for()
    tr = simulate(env, PolicyConfig())
    batches = episode_batches(tr)
    assert len(batches) == len(tr.segments)
    assert sum(map(len, batches)) == sum(len(e) for e in tr.eval_vertices)


def test_transit_and_episode_checks_pass():
    env, _ = env_for(6, 6, horizon=100)
    tr = simulate(env, PolicyConfig())
    assert check_episode_bound(tr).passed
    t = check_transit(tr)
    assert t.passed and t.detail["longest_path"] <= 10


def test_eigenvalue_diagonal_prior_matches_closed_form():
    # with a diagonal prior the multiset matrix is diagonal, so the exact
    # largest eigenvalue equals the closed-form bound
    g = build_grid(3, 3)
    cov = CoverageModel.uniform(g, 2, 1)
    kern = Kernel("diagonal", 1.0)
    fld = RewardField(np.random.default_rng(0).uniform(0, 1, 9))
    env = Environment(g, cov, fld, 10.0, 80, (0, 8), kern)
    tr = simulate(env, PolicyConfig())
    chk = check_episode_eigenvalue(tr, kern.matrix(g), 10.0)
    assert chk.passed
    for ep in chk.detail["episodes"]:
        assert ep["lambda_max"] == pytest.approx(ep["diagonal_bound"], rel=1e-9, abs=1e-12)
        assert ep["lambda_max"] <= 10.0 + 1e-8


def test_eigenvalue_check_needs_noise():
    env, _ = env_for(noise=0.0)
    tr = simulate(env, PolicyConfig())
    with pytest.raises(InvalidArgumentError):
        check_episode_eigenvalue(tr, env.kernel.matrix(env.graph), 0.0)


@pytest.mark.parametrize("horizon", [1, 2, 40])
def test_info_identity_short_runs(horizon):
    env, _ = env_for(horizon=horizon)
    tr = simulate(env, PolicyConfig())
    k = env.kernel.matrix(env.graph)
    chk = check_info_gain_identity(tr, k, env.noise_var)
    assert chk.passed and chk.detail["residual"] <= 1e-6
    if horizon == 2:
        assert tr.episode_count in (1, 2)


def test_info_identity_two_episode_oracle():
    # direct chain rule on a two-episode multiset
    env, _ = env_for(horizon=2)
    k = env.kernel.matrix(env.graph)
    a, b = [0, 5], [5, 10, 15]
    total = info_gain(k, 0.1, a + b)
    from macdt.gp import posterior_cov_from_counts
    post = posterior_cov_from_counts(k, np.bincount(a, minlength=16), 0.1)
    assert total == pytest.approx(info_gain(k, 0.1, a) + info_gain(post, 0.1, b), abs=1e-10)


def test_log_det_trace_passes():
    env, _ = env_for(6, 6, horizon=120)
    tr = simulate(env, PolicyConfig())
    chk = check_log_det_trace(tr, env.kernel.matrix(env.graph), env.noise_var)
    assert chk.passed and chk.margin >= 0


def _traces(beta, n=20):
    out = []
    for s in range(n):
        env, _ = env_for(3, 3, seed=s, horizon=20, n_agents=1)
        out.append(simulate(env, PolicyConfig(beta=beta)))
    return out


def test_clean_event_rate_extremes():
    assert clean_event_rate(_traces(50.0)) == 1.0
    assert clean_event_rate(_traces(0.0)) == 0.0
    with pytest.raises(SampleSizeError):
        clean_event_rate(_traces(1.0, n=5))


def test_gamma_single_sample_closed_form():
    k = Kernel("se", 2.0, 0.3).matrix(build_grid(3, 3))
    val, tag = estimate_gamma(k, 0.5, 1)
    assert tag == "exact"
    assert val == pytest.approx(0.5 * math.log(1 + 2.0 / 0.5))


def test_gamma_diagonal_kernel():
    k = np.eye(4)
    val, _ = estimate_gamma(k, 1.0, 3, method="exact")
    # spreading over distinct vertices beats repeating one
    assert val == pytest.approx(3 * 0.5 * math.log(2))
    # with 8 samples on 4 vertices the best multiset uses each vertex twice
    val8, _ = estimate_gamma(k, 1.0, 8, method="exact")
    assert val8 == pytest.approx(4 * 0.5 * math.log(3))
    assert estimate_gamma(k, 1.0, 8, method="greedy")[0] == pytest.approx(val8)


def test_gamma_greedy_equals_exact_3x3_pairs():
    k = Kernel("se", 1.0, 0.5).matrix(build_grid(3, 3))
    ex, _ = estimate_gamma(k, 0.1, 2, method="exact")
    gr, tag = estimate_gamma(k, 0.1, 2, method="greedy")
    assert tag == "greedy-lower-bound"
    assert gr == pytest.approx(ex, rel=1e-9)
    brute = max(info_gain(k, 0.1, c) for c in itertools.combinations_with_replacement(range(9), 2))
    assert ex == pytest.approx(brute)


def test_gamma_greedy_is_lower_bound():
    k = Kernel("se", 1.0, 0.4).matrix(build_grid(2, 3))
    for m in (2, 3, 4):
        ex, _ = estimate_gamma(k, 0.2, m, method="exact")
        gr, _ = estimate_gamma(k, 0.2, m, method="greedy")
        assert gr <= ex + 1e-12
        # greedy on a monotone submodular set function: within 1 - 1/e
        assert gr >= (1 - 1 / math.e) * ex


def test_gamma_argument_checks():
    k = np.eye(3)
    with pytest.raises(InvalidArgumentError):
        estimate_gamma(k, 1.0, 0)
    with pytest.raises(InvalidArgumentError):
        estimate_gamma(k, 0.0, 1)
    with pytest.raises(InvalidArgumentError):
        estimate_gamma(k, 1.0, 4, repeat=False)
    with pytest.raises(InvalidArgumentError):
        estimate_gamma(k, 1.0, 1, method="mc")
    with pytest.raises(InvalidArgumentError):
        estimate_gamma(np.eye(64), 1.0, 10, method="exact")


def _params(**kw):
    base = dict(noise_var=0.1, gamma=5.0, cap=5, n_vertices=36, horizon=200, delta=0.1,
                n_agents=2, diameter=10, prior_bound=4.0, kappa_max=1.0)
    base.update(kw)
    return BoundParams(**base)


def test_theorem_rhs_terms():
    p = _params()
    rhs = theorem1_rhs(p)
    log_term = math.log(2 * 36 * math.pi**2 * 200**2 / 0.3)
    assert rhs["part1"] == pytest.approx(8 * math.sqrt(0.1) * math.sqrt(5.0 * 5 * 36 * 200 * log_term))
    switch = 2 * 10 * 5 * 36 * 4.0 * (math.log(200) + 2)
    tail = 2 * 36 * math.sqrt(2 * 2 * 5 * log_term * 1.0)
    assert rhs["part2"] == pytest.approx(switch + tail)
    assert rhs["total"] == pytest.approx(rhs["part1"] + rhs["part2"])


def test_theorem_rhs_sqrt_t_scaling():
    a = theorem1_rhs(_params(horizon=100))["part1"]
    b = theorem1_rhs(_params(horizon=400))["part1"]
    la = math.log(2 * 36 * math.pi**2 * 100**2 / 0.3)
    lb = math.log(2 * 36 * math.pi**2 * 400**2 / 0.3)
    assert b / a == pytest.approx(2 * math.sqrt(lb / la))


def test_bound_params_validation():
    with pytest.raises(InvalidArgumentError):
        _params(gamma=0.0)
    with pytest.raises(InvalidArgumentError):
        _params(horizon=0)


def test_report_zero_field_within_bound():
    g = build_grid(4, 4)
    env = Environment(g, CoverageModel.uniform(g, 2, 1), RewardField(np.zeros(16)), 0.1, 40, (0, 15),
                      Kernel("se", 1.0, 0.5))
    tr = simulate(env, PolicyConfig())
    rep = theory_report(tr, env)
    assert rep.passed
    assert rep.alpha_regret == 0.0
    assert rep.get("regret_bound").margin > 0
    assert rep.gamma_method == "greedy-lower-bound"
    d = rep.to_dict()
    assert d["passed"] and len(d["checks"]) == len(rep.checks)
    with pytest.raises(KeyError):
        rep.get("nope")


def test_report_noiseless_skips_gp_checks():
    env, _ = env_for(noise=0.0)
    rep = theory_report(simulate(env, PolicyConfig()), env)
    assert [c.name for c in rep.checks] == ["episode_bound", "transit"]
    assert rep.bound is None


def test_matrix_lemma_suite_small():
    chk = matrix_lemma_suite(trials=200, seed=1)
    assert chk.passed
    assert chk.detail["schur_failures"] == 0 and chk.detail["interlacing_failures"] == 0
    with pytest.raises(InvalidArgumentError):
        matrix_lemma_suite(n_max=9)
    with pytest.raises(InvalidArgumentError):
        matrix_lemma_suite(trials=0)
