import json

import numpy as np
import pytest
from oracles import finite_minimax_values, shapley_values

from pmg.best_response import gap_report
from pmg.counterexamples import build_finite_example, build_infinite_example, single_controller_variant
from pmg.game import Finite, MarkovGame, StateInteraction
from pmg.generate import GeneratorConfig, generate, random_config
from pmg.policy import CorrelatedPolicy, ProductPolicy, enumerate_deterministic
from pmg.solver import (
    collapse_cce,
    collapse_two_player,
    effective_horizon,
    no_regret_cce,
    solve_discounted,
    solve_finite,
    truncate,
)
from pmg.valuation import evaluate


def test_effective_horizon():
    assert effective_horizon(2 / 3, 1e-2) == 14
    assert effective_horizon(0.5, 1.0) == 1
    assert effective_horizon(0.99, 0.1) == 231
    with pytest.raises(ValueError):
        effective_horizon(1.0, 0.1)
    with pytest.raises(ValueError):
        effective_horizon(0.5, 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_two_player_finite_value_matches_lp_oracle(seed):
    g = generate(GeneratorConfig(n=2, num_states=2, steps=2, action_counts=(2, 2), seed=seed))
    rep = solve_finite(g, 1e-2, seed=seed)
    assert rep.certified_gap <= 1e-2
    value = finite_minimax_values(g) @ g.rho
    assert rep.certified.current_values[0] == pytest.approx(value, abs=1e-2)


def _pure_value(g, f0, f1):
    return evaluate(g, ProductPolicy((f0, f1))).layer(0)[0] @ g.rho


@pytest.mark.parametrize("seed", range(3))
def test_two_player_value_inside_deterministic_sandwich(seed):
    g = generate(GeneratorConfig(n=2, num_states=2, steps=2, action_counts=(2, 2), seed=10 + seed))
    F0 = list(enumerate_deterministic(g, 0))
    F1 = list(enumerate_deterministic(g, 1))
    table = np.array([[_pure_value(g, a, b) for b in F1] for a in F0])
    lower, upper = table.min(axis=1).max(), table.max(axis=0).min()
    v = solve_finite(g, 1e-3, seed=seed).certified.current_values[0]
    assert lower - 1e-3 <= v <= upper + 1e-3


def test_dominant_structure_is_solved_exactly():
    m = np.array([[0.5, 0.3], [0.1, -0.2]])
    uniform = np.full((2, 2), 0.5)
    st_ = StateInteraction({(0, 1): m, (1, 0): -m.T}, (0,), uniform)
    g = MarkovGame((2, 2), ((st_, st_), (st_, st_), (st_, st_)), np.array([0.5, 0.5]), Finite(3))
    rep = solve_finite(g, 1e-6)
    assert rep.certified_gap == 0.0
    assert np.all(rep.policy.factors[0][..., 0] == 1.0)
    assert np.all(rep.policy.factors[1][..., 1] == 1.0)
    assert np.all(rep.iterations == 0)


@pytest.mark.parametrize("seed", range(8))
def test_random_instances_certified(seed):
    g = generate(random_config(seed))
    rep = solve_finite(g, 1e-2, seed=seed)
    assert rep.certified_gap <= 1e-2
    assert rep.certified == gap_report(g, rep.policy)
    assert np.abs(rep.values.values.sum(axis=0)).max() <= 1e-9


def test_solver_values_are_policy_values():
    g = generate(GeneratorConfig(n=3, num_states=3, steps=3, seed=3))
    rep = solve_finite(g, 1e-2)
    assert np.allclose(rep.values.values, evaluate(g, rep.policy).values, atol=1e-12)


def test_determinism_and_jobs():
    g = generate(GeneratorConfig(n=4, num_states=3, steps=3, seed=8))
    a = json.dumps(solve_finite(g, 1e-2, seed=5).to_dict(timing=False))
    b = json.dumps(solve_finite(g, 1e-2, seed=5).to_dict(timing=False))
    c = json.dumps(solve_finite(g, 1e-2, seed=5, jobs=4).to_dict(timing=False))
    assert a == b == c


@pytest.mark.parametrize("seed", range(5))
def test_halving_eps_does_not_increase_gap(seed):
    g = generate(random_config(100 + seed))
    coarse = solve_finite(g, 2e-2, seed=seed).certified_gap
    fine = solve_finite(g, 1e-2, seed=seed).certified_gap
    assert fine <= coarse + 1e-12


def test_solver_rejects_wrong_horizon(small_game, small_discounted):
    with pytest.raises(ValueError):
        solve_finite(small_discounted)
    with pytest.raises(ValueError):
        solve_discounted(small_game)
    with pytest.raises(ValueError):
        solve_finite(small_game, eps=0.0)


def test_structural_error_on_counterexample():
    from pmg.stage import StructuralError

    with pytest.raises(StructuralError):
        solve_finite(build_finite_example().game)


def test_truncate_scales_rewards(small_discounted):
    fin = truncate(small_discounted, 4)
    assert fin.num_layers == 4
    e = next(iter(small_discounted.layers[0][0].edges))
    assert np.allclose(fin.layers[3][0].edges[e], 0.5**3 * small_discounted.layers[0][0].edges[e])
    with pytest.raises(ValueError):
        truncate(fin, 2)


def test_discounted_switching_variant_certified():
    g = single_controller_variant(build_infinite_example())
    rep = solve_discounted(g, 1e-2)
    assert rep.certified_gap <= 1e-2
    assert rep.policy.num_layers == effective_horizon(g.gamma, 1e-2 * (1 - g.gamma) / 12)


def test_discounted_zero_rewards():
    g = generate(GeneratorConfig(n=3, num_states=2, steps=None, gamma=0.5, density=0.0, seed=1))
    rep = solve_discounted(g, 1e-2)
    assert rep.certified_gap == 0.0


@pytest.mark.parametrize("seed,control", [(0, "single"), (1, "single"), (2, "all"), (3, "all")])
def test_discounted_two_player_matches_shapley(seed, control):
    g = generate(GeneratorConfig(n=2, num_states=2, steps=None, gamma=0.6, action_counts=(2, 2), seed=seed, control=control))
    rep = solve_discounted(g, 1e-2, seed=seed)
    assert rep.certified_gap <= 1e-2
    assert rep.certified.current_values[0] == pytest.approx(shapley_values(g) @ g.rho, abs=1e-2)


@pytest.mark.parametrize("seed", range(5))
def test_collapse_bound_on_compliant_games(seed):
    g = generate(random_config(200 + seed))
    sigma = no_regret_cce(g, iters=300, seed=seed)
    res = collapse_cce(g, sigma)
    assert res.bound_applies and res.holds(1e-6)
    assert res.before.kind == "CCE" and res.after.kind == "NE"


@pytest.mark.parametrize("seed", range(4))
def test_two_player_collapse_without_switching_control(seed):
    g = generate(GeneratorConfig(n=2, num_states=3, steps=3, seed=seed, control="all"))
    assert not g.is_switching_control
    res = collapse_two_player(g, no_regret_cce(g, iters=300, seed=seed))
    assert res.holds(1e-6)


def test_collapse_of_exact_ne_is_trivial():
    m = np.array([[0.5, 0.3], [0.1, -0.2]])
    st_ = StateInteraction({(0, 1): m, (1, 0): -m.T}, (0,), np.full((2, 2), 0.5))
    g = MarkovGame((2, 2), ((st_, st_),), np.array([0.5, 0.5]), Finite(1))
    pi = solve_finite(g, 1e-9).policy
    sigma = CorrelatedPolicy.lift(pi)
    for res in (collapse_cce(g, sigma), collapse_two_player(g, sigma)):
        assert res.before.max_gap <= 1e-12 and res.after.max_gap <= 1e-12
        assert all(np.array_equal(a, b) for a, b in zip(res.policy.factors, pi.factors))


def test_collapse_not_claimed_without_switching_control():
    ex = build_finite_example()
    res = collapse_cce(ex.game, ex.sigma)
    assert not res.bound_applies
    assert res.before.max_gap <= 1e-12
    assert res.after.max_gap >= 13 / 160 - 1e-9
    with pytest.raises(ValueError):
        collapse_two_player(ex.game, ex.sigma)


def test_no_regret_cce_is_correlated(small_game, small_discounted):
    sigma = no_regret_cce(small_game, iters=200)
    assert isinstance(sigma, CorrelatedPolicy)
    assert sigma.num_layers == small_game.num_layers
    assert np.allclose(sigma.probs.sum(axis=tuple(range(2, 2 + small_game.n))), 1.0)
    with pytest.raises(ValueError):
        no_regret_cce(small_discounted)
