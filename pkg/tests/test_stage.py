import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import pure_stage_gaps

from pmg.counterexamples import build_finite_example, single_controller_variant
from pmg.generate import GeneratorConfig, generate
from pmg.policy import random_product
from pmg.stage import (
    StageGame,
    StructuralError,
    build_stage,
    certified_gaps,
    solve_stage,
    solve_stages,
    stage_values,
)
from pmg.valuation import evaluate_finite


def dense_rewards(stage: StageGame) -> np.ndarray:
    """``R[k, a_1, ..., a_n]`` assembled entry by entry."""
    counts = stage.action_counts
    R = np.zeros((stage.n,) + counts)
    for a in itertools.product(*(range(c) for c in counts)):
        for k in range(stage.n):
            v = sum(m[a[k], a[j]] for (i, j), m in stage.edges.items() if i == k)
            if stage.unary is not None:
                v += stage.unary[k][a[stage.controller]]
            R[(k,) + a] = v
    return R


def random_stage(seed: int, n: int = 3, counts=None, with_continuation=True) -> StageGame:
    g = generate(GeneratorConfig(n=n, num_states=3, steps=2, action_counts=counts, seed=seed))
    w = None
    if with_continuation:
        pi = random_product(g, np.random.default_rng(seed))
        w = evaluate_finite(g, pi).layer(1)
    return build_stage(g, 0, seed % 3, w)


def test_matching_pennies(pennies):
    sol = solve_stage(build_stage(pennies, 0, 0), eps=1e-3)
    assert sol.converged and sol.gap <= 1e-3
    for x in sol.strategies:
        assert np.allclose(x, [0.5, 0.5], atol=1e-2)
    assert np.allclose(sol.values, 0.0, atol=1e-3)


def test_dummy_state_any_profile_is_equilibrium():
    g = single_controller_variant(build_finite_example())
    stage = build_stage(g, 1, 2)
    prof = [np.array([0.3, 0.7]), np.array([1.0, 0.0]), np.array([1.0])]
    assert np.allclose(certified_gaps(stage, prof), 0.0)
    assert np.allclose(stage_values(stage, prof), [-0.5, -0.5, 1.0])
    assert solve_stage(stage, 1e-9).gap == 0.0


def test_terminal_stage_has_no_continuation(small_game):
    stage = build_stage(small_game, 1, 0)
    assert stage.unary is None or not np.any(stage.unary)
    assert stage.edges.keys() == small_game.state(1, 0).edges.keys()


def test_continuation_is_recentred(small_game):
    w = np.array([[1.0, 2.0], [-0.5, -1.5], [-0.5, -0.5 + 1e-8]])
    stage = build_stage(small_game, 0, 1, w)
    assert np.allclose(stage.unary.sum(axis=0), 0.0, atol=1e-15)


def test_continuation_violation_is_structural(small_game):
    with pytest.raises(StructuralError):
        build_stage(small_game, 0, 0, np.ones((3, 2)))


def test_two_controllers_with_three_players_is_structural():
    ex = build_finite_example()
    w = evaluate_finite(ex.game, ex.sigma).layer(1)
    with pytest.raises(StructuralError):
        build_stage(ex.game, 0, 0, w)


def test_stage_values_reproduce_backward_values():
    g = single_controller_variant(build_finite_example())
    pi = random_product(g, np.random.default_rng(0))
    V = evaluate_finite(g, pi)
    for s in range(3):
        stage = build_stage(g, 0, s, V.layer(1))
        prof = [f[0, s] for f in pi.factors]
        assert np.allclose(stage_values(stage, prof), V.values[:, 0, s], atol=1e-12)


@given(st.integers(0, 10_000))
def test_stage_values_sum_to_zero(seed):
    stage = random_stage(seed % 300, n=4, counts=(2, 3, 1, 2))
    rng = np.random.default_rng(seed)
    prof = [rng.dirichlet(np.ones(a)) for a in stage.action_counts]
    v = stage_values(stage, prof)
    assert abs(v.sum()) <= 1e-12 * max(1.0, np.abs(v).max())


@given(st.integers(0, 10_000))
def test_certified_gaps_match_dense_oracle(seed):
    stage = random_stage(seed % 300, counts=(2, 3, 2))
    rng = np.random.default_rng(seed)
    prof = [rng.dirichlet(np.ones(a)) for a in stage.action_counts]
    assert np.allclose(certified_gaps(stage, prof), pure_stage_gaps(dense_rewards(stage), prof), atol=1e-12)


def test_two_player_multi_controller_folding():
    g = generate(GeneratorConfig(n=2, num_states=2, steps=2, seed=6, control="all"))
    pi = random_product(g, np.random.default_rng(0))
    V = evaluate_finite(g, pi)
    stage = build_stage(g, 0, 1, V.layer(1))
    prof = [f[0, 1] for f in pi.factors]
    assert np.allclose(stage_values(stage, prof), V.values[:, 0, 1], atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_random_stage_reaches_eps(seed):
    stage = random_stage(seed)
    sol = solve_stage(stage, 1e-2)
    assert sol.converged and sol.gap <= 1e-2
    R = dense_rewards(stage)
    assert pure_stage_gaps(R, list(sol.strategies)).max() == pytest.approx(sol.gap, abs=1e-12)


@pytest.mark.parametrize("learner", ["omwu", "mwu", "omwu-rand", "mwu-rand"])
def test_gap_bounded_by_total_regret(learner):
    stages = [random_stage(s) for s in range(6)]
    for sol in solve_stages(stages, 1e-3, max_iters=3000, learner=learner, shortcut=False, seed=list(range(6))):
        assert sol.gap <= sol.avg_regrets.sum() + 1e-9


def test_dominant_profile_shortcut():
    # both players strictly prefer action 1 whatever the other does
    stage = StageGame((2, 2), {(0, 1): np.array([[0.0, -0.5], [0.2, -0.3]]), (1, 0): np.array([[0.0, -0.2], [0.5, 0.3]])})
    sol = solve_stage(stage, 1e-9)
    assert sol.iterations == 0 and sol.gap == 0.0
    assert [int(np.argmax(x)) for x in sol.strategies] == [1, 1]


def test_deterministic_given_seed():
    stages = [random_stage(s) for s in range(4)]
    a = solve_stages(stages, 1e-3, seed=[1, 2, 3, 4], learner="omwu-rand")
    b = solve_stages(stages, 1e-3, seed=[1, 2, 3, 4], learner="omwu-rand")
    for x, y in zip(a, b):
        assert all(np.array_equal(p, q) for p, q in zip(x.strategies, y.strategies))
        assert x.iterations == y.iterations


def test_batch_independence():
    stages = [random_stage(s, counts=(2, 2, 2)) for s in range(4)]
    batched = solve_stages(stages, 1e-3)
    for st_, sol in zip(stages, batched):
        alone = solve_stage(st_, 1e-3)
        assert all(np.array_equal(p, q) for p, q in zip(alone.strategies, sol.strategies))


def test_non_convergence_is_reported(pennies):
    sol = solve_stage(build_stage(pennies, 0, 0), eps=1e-12, max_iters=20, learner="mwu-rand")
    assert not sol.converged and sol.iterations == 20 and sol.gap > 1e-12


def test_bad_arguments(pennies):
    stage = build_stage(pennies, 0, 0)
    with pytest.raises(ValueError):
        solve_stage(stage, 0.0)
    with pytest.raises(ValueError):
        solve_stage(stage, 1e-2, learner="sgd")
