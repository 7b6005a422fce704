from fractions import Fraction

import numpy as np
import pytest
from oracles import brute_force_best_value

from pmg.best_response import best_response
from pmg.counterexamples import (
    DEVIATIONS,
    NoCollapseFailure,
    build_example,
    build_finite_example,
    build_infinite_example,
    collapse_on_variant,
    deviation_values,
    no_collapse_report,
    resolvents,
    single_controller_variant,
    verify_no_collapse,
)
from pmg.game import validate
from pmg.policy import CorrelatedPolicy, enumerate_deterministic


@pytest.mark.parametrize("build", [build_finite_example, build_infinite_example])
def test_examples_are_zero_sum_but_not_switching_control(build):
    g = build().game
    assert validate(g) == []
    assert not g.is_switching_control


def test_finite_published_numbers():
    ex = build_finite_example()
    rep = verify_no_collapse(ex)
    assert rep.value_sigma == pytest.approx((1 / 20, 1 / 20, -1 / 10), abs=1e-12)
    assert rep.value_marginal[0] == pytest.approx(-13 / 160, abs=1e-12)
    for pq, want in ex.published["deviations"].items():
        assert rep.deviations[pq] == pytest.approx(float(want), abs=1e-12)
    assert rep.deviation_vs_marginal == pytest.approx(0.0, abs=1e-12)
    assert rep.reference_gap == pytest.approx(13 / 160, abs=1e-12)
    assert rep.cce_gap <= 1e-12


def test_finite_marginal_true_gap():
    # the exact best response against the marginals beats all-a2
    rep = no_collapse_report(build_finite_example())
    assert rep.ne_gap == pytest.approx(21 / 160, abs=1e-12)
    assert rep.ne_gap >= rep.required_gap


def test_infinite_published_numbers():
    ex = build_infinite_example()
    assert ex.game.gamma == pytest.approx(2 / 3, abs=0)
    rep = verify_no_collapse(ex)
    assert rep.value_sigma[0] == pytest.approx(-0.1, abs=1e-12)
    assert rep.value_marginal[0] == pytest.approx(-0.3, abs=1e-12)
    want = (-2 / 5, -1 / 6, -5 / 16, -5 / 16)
    assert [rep.deviations[pq] for pq in DEVIATIONS] == pytest.approx(want, abs=1e-12)
    assert rep.deviation_vs_marginal == pytest.approx(-1 / 6, abs=1e-12)
    assert rep.ne_gap == pytest.approx(2 / 15, abs=1e-12)


def test_resolvents_match_displays():
    ex = build_infinite_example()
    R_sigma, R_pi = resolvents(ex)
    assert np.abs(R_sigma - np.array(ex.published["resolvent_sigma"], dtype=float)).max() <= 1e-12
    assert np.abs(R_pi - np.array(ex.published["resolvent_marginal"], dtype=float)).max() <= 1e-12
    with pytest.raises(ValueError):
        resolvents(build_finite_example())


def test_resolvent_row_pins_discount():
    # the first displayed row (9/5, 6/5, 0) sums to 1/(1 - gamma)
    ex = build_infinite_example()
    row = ex.published["resolvent_sigma"][0]
    assert 1 - 1 / sum(row) == Fraction(2, 3)


@pytest.mark.parametrize("build", [build_finite_example, build_infinite_example])
def test_four_deviations_agree_with_solver(build):
    ex = build()
    enumerated = max(deviation_values(ex).values())
    assert best_response(ex.game, ex.sigma, 0, tol=1e-12).value_at_rho == pytest.approx(enumerated, abs=1e-9)
    pruned = list(enumerate_deterministic(ex.game, 0, stationary=True, prune_inert=True))
    assert len(pruned) == 4


def test_finite_brute_force_over_nonstationary_deviations():
    ex = build_finite_example()
    assert brute_force_best_value(ex.game, ex.sigma, 0) == pytest.approx(1 / 20, abs=1e-12)
    assert brute_force_best_value(ex.game, ex.marginal, 0) == pytest.approx(1 / 20, abs=1e-12)


def test_verify_surfaces_failures():
    ex = build_finite_example()
    uniform = CorrelatedPolicy(np.full((1, 3, 2, 2, 1), 0.25))
    bad = type(ex)(ex.name, ex.game, uniform, ex.published)
    with pytest.raises(NoCollapseFailure, match="CCE gap"):
        verify_no_collapse(bad)


@pytest.mark.parametrize("name", ["finite", "infinite"])
def test_single_controller_variant_collapses(name):
    ex = build_example(name)
    g = single_controller_variant(ex)
    assert g.is_switching_control and validate(g) == []
    res = collapse_on_variant(ex)
    assert res.bound_applies and res.holds(1e-9)


def test_unknown_example():
    with pytest.raises(ValueError):
        build_example("other")
