import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_force_best_value

from pmg.best_response import (
    best_response,
    best_response_discounted,
    best_response_finite,
    gap_report,
    induce_mdp,
    solve_stationary_mdp,
)
from pmg.counterexamples import build_finite_example, build_infinite_example, deviation_factor
from pmg.generate import GeneratorConfig, generate
from pmg.policy import (
    CorrelatedPolicy,
    ProductPolicy,
    marginalize,
    random_correlated,
    random_product,
    with_factor,
)
from pmg.valuation import evaluate


def test_finite_counterexample_best_response_vs_sigma():
    ex = build_finite_example()
    br = best_response_finite(ex.game, ex.sigma, 0)
    assert br.value_at_rho == pytest.approx(1 / 20, abs=1e-12)
    # a2 in s1, then a1 in s2
    assert np.argmax(br.factor[0, 0]) == 1
    assert np.argmax(br.factor[1, 1]) == 0


def test_finite_counterexample_best_response_vs_marginal():
    # all-a2 earns 0, but the exact best response (a2 in s1, a1 in s2) earns 1/20
    ex = build_finite_example()
    pi = ex.marginal
    all_a2 = evaluate(ex.game, with_factor(pi, 0, deviation_factor(0, 0))).layer(0)[0] @ ex.game.rho
    assert all_a2 == pytest.approx(0.0, abs=1e-12)
    br = best_response_finite(ex.game, pi, 0)
    assert br.value_at_rho == pytest.approx(1 / 20, abs=1e-12)


def test_infinite_counterexample_best_responses():
    ex = build_infinite_example()
    for pol in (ex.sigma, ex.marginal):
        br = best_response_discounted(ex.game, pol, 0, tol=1e-12)
        assert br.value_at_rho == pytest.approx(-1 / 6, abs=1e-12)
        assert np.argmax(br.factor[0, 0]) == 1 and np.argmax(br.factor[0, 1]) == 1


def test_closed_form_deviation_values():
    ex = build_finite_example()
    for p in (0, 1):
        for q in (0, 1):
            v = evaluate(ex.game, with_factor(ex.sigma, 0, deviation_factor(p, q))).layer(0)[0] @ ex.game.rho
            assert v == pytest.approx(-p / 5 - q * (p - 2) / 40, abs=1e-12)


def test_single_action_player_gets_fixed_value():
    ex = build_finite_example()
    br = best_response(ex.game, ex.sigma, 2)
    assert br.value_at_rho == pytest.approx(-0.1, abs=1e-12)


def test_myopic_action_for_tiny_discount():
    r = np.array([[0.0, 1.0, 0.5]])
    P = np.array([[[1.0], [1.0], [1.0]]])
    act, v = solve_stationary_mdp(r, P, 1e-6, 1e-12)
    assert act[0] == 1 and v[0] == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        solve_stationary_mdp(r, P, 0.5, 0.0)


def test_controller_kernel_ignores_others():
    g = generate(GeneratorConfig(n=3, num_states=3, steps=2, seed=4))
    rng = np.random.default_rng(0)
    a = induce_mdp(g, random_correlated(g, rng), 1)
    b = induce_mdp(g, random_correlated(g, rng), 1)
    for h in range(2):
        for s in range(3):
            if g.state(h, s).controller == 1:
                assert np.array_equal(a.transitions[h, s], b.transitions[h, s])


@given(st.integers(0, 2**31 - 1))
def test_correlated_and_marginal_induce_same_mdp(seed):
    # only pairwise marginals enter rewards and only the controller's marginal enters the kernel
    g = generate(GeneratorConfig(n=3, num_states=2, steps=2, action_counts=(2, 3, 2), seed=seed % 500))
    sigma = random_correlated(g, np.random.default_rng(seed))
    pi = marginalize(sigma)
    for k in range(3):
        a, b = induce_mdp(g, sigma, k), induce_mdp(g, pi, k)
        assert np.allclose(a.rewards, b.rewards, atol=1e-12)
        assert np.allclose(a.transitions, b.transitions, atol=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_deviation_values_agree_for_sigma_and_marginals(seed):
    g = generate(GeneratorConfig(n=3, num_states=2, steps=2, action_counts=(2, 2, 2), seed=seed % 500))
    rng = np.random.default_rng(seed)
    sigma = random_correlated(g, rng)
    pi = marginalize(sigma)
    k = int(rng.integers(3))
    f = random_product(g, rng).factors[k]
    v1 = evaluate(g, with_factor(sigma, k, f)).layer(0)[k] @ g.rho
    v2 = evaluate(g, with_factor(pi, k, f)).layer(0)[k] @ g.rho
    assert v1 == pytest.approx(v2, abs=1e-9)


@given(st.integers(0, 2**31 - 1), st.booleans())
def test_best_response_matches_enumeration_finite(seed, correlated):
    g = generate(GeneratorConfig(n=3, num_states=2, steps=2, action_counts=(2, 2, 2), seed=seed % 500))
    rng = np.random.default_rng(seed)
    pol = random_correlated(g, rng) if correlated else random_product(g, rng)
    for k in range(3):
        br = best_response(g, pol, k)
        assert br.value_at_rho == pytest.approx(brute_force_best_value(g, pol, k), abs=1e-9)


@given(st.integers(0, 2**31 - 1))
def test_best_response_matches_enumeration_discounted(seed):
    g = generate(GeneratorConfig(n=3, num_states=3, steps=None, gamma=0.8, action_counts=(2, 2, 2), seed=seed % 500))
    pol = random_product(g, np.random.default_rng(seed))
    for k in range(3):
        br = best_response(g, pol, k, tol=1e-10)
        assert br.value_at_rho == pytest.approx(brute_force_best_value(g, pol, k), abs=1e-9)


@given(st.integers(0, 2**31 - 1))
def test_best_response_dominates_random_deviations(seed):
    g = generate(GeneratorConfig(n=3, num_states=3, steps=3, seed=seed % 500))
    rng = np.random.default_rng(seed)
    pol = random_product(g, rng)
    k = int(rng.integers(3))
    br = best_response(g, pol, k)
    for _ in range(5):
        f = random_product(g, rng).factors[k]
        assert evaluate(g, with_factor(pol, k, f)).layer(0)[k] @ g.rho <= br.value_at_rho + 1e-12
    assert np.isclose(evaluate(g, with_factor(pol, k, br.factor)).layer(0)[k] @ g.rho, br.value_at_rho)


def test_gap_report_counterexample():
    ex = build_finite_example()
    cce = gap_report(ex.game, ex.sigma)
    assert cce.kind == "CCE" and cce.max_gap <= 1e-12
    ne = gap_report(ex.game, ex.marginal)
    assert ne.kind == "NE"
    assert ne.gaps[0] == pytest.approx(21 / 160, abs=1e-12)
    assert ne.gaps[2] == 0.0


def test_gap_report_idempotent_and_parallel(small_game):
    pol = random_correlated(small_game, np.random.default_rng(8))
    a = gap_report(small_game, pol)
    b = gap_report(small_game, pol, jobs=3)
    assert a == b
    assert all(x >= 0 for x in a.gaps)


def test_lifted_policy_has_same_gap(small_game):
    pi = random_product(small_game, np.random.default_rng(9))
    assert np.allclose(gap_report(small_game, pi).gaps, gap_report(small_game, CorrelatedPolicy.lift(pi)).gaps)


def test_stationary_policy_in_finite_game(small_game):
    pi = ProductPolicy.uniform(small_game, num_layers=1)
    assert gap_report(small_game, pi).max_gap >= 0.0
