"""Two three-player games whose CCE marginals are not Nash.

Players 1 and 2 both drive the transitions, so the games are zero-sum and
polymatrix but not switching-control. Player 1 picks ``a1``/``a2``, player 2
``b1``/``b2``, player 3 has a single action and absorbs the negated sum.

* In ``s1`` and ``s2``, playing ``a1`` (resp. ``b1``) pays 1/20. In ``s3`` both
  players lose 1/2.
* From ``s1`` the joint action ``(a1, b1)`` leads to ``s3``, anything else to
  ``s2``. From ``s2``, ``(a1, b1)`` leads to ``s3``, anything else to ``s1``.
  ``s3`` moves to ``s1`` or ``s2`` with probability 1/2 each.

The correlated policy ``sigma`` mixes ``(a1, b2)`` and ``(a2, b1)`` evenly in
``s1``/``s2``: it never enters ``s3`` and no one gains by deviating. Its
marginals play ``(a1, b1)`` a quarter of the time, which drags both players
into ``s3``.

Indices are zero-based in code: ``s1, s2, s3`` are states ``0, 1, 2`` and
``a1`` is action ``0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from pmg.best_response import GapReport, gap_report
from pmg.game import Discounted, Finite, MarkovGame, StateInteraction
from pmg.policy import CorrelatedPolicy, ProductPolicy, marginalize, with_factor
from pmg.solver import CollapseResult, collapse_cce
from pmg.valuation import evaluate, resolvent

GAP_TOL = 1e-9
BONUS = Fraction(1, 20)
PENALTY = Fraction(-1, 2)
GAMMA = Fraction(2, 3)

# (p, q): does player 1 play a1 in s1 (p) and in s2 (q)
DEVIATIONS = ((1, 1), (0, 0), (1, 0), (0, 1))


@dataclass(frozen=True, eq=False)
class Example:
    name: str
    game: MarkovGame
    sigma: CorrelatedPolicy
    published: dict

    @property
    def marginal(self) -> ProductPolicy:
        return marginalize(self.sigma)


def _edge(values: list[Fraction]) -> np.ndarray:
    return np.array([[float(v)] for v in values])


def _states() -> tuple[StateInteraction, ...]:
    def edges(own: list[Fraction]):
        # players 1 and 2 share an all-zero edge: they interact only through the dynamics
        m = _edge(own)
        z = np.zeros((2, 2))
        return {(0, 1): z, (1, 0): z.copy(), (0, 2): m, (2, 0): -m.T, (1, 2): m.copy(), (2, 1): -m.T}

    def kernel(hit: int, miss: int) -> np.ndarray:
        P = np.zeros((2, 2, 3))
        P[:, :, miss] = 1.0
        P[0, 0] = 0.0
        P[0, 0, hit] = 1.0
        return P

    s1 = StateInteraction(edges([BONUS, Fraction(0)]), (0, 1), kernel(2, 1))
    s2 = StateInteraction(edges([BONUS, Fraction(0)]), (0, 1), kernel(2, 0))
    P3 = np.zeros((2, 2, 3))
    P3[..., 0] = P3[..., 1] = 0.5
    s3 = StateInteraction(edges([PENALTY, PENALTY]), (0, 1), P3)
    return (s1, s2, s3)


def cce_sigma(stationary: bool = False) -> CorrelatedPolicy:
    """Even mix of ``(a1, b2)`` and ``(a2, b1)`` in ``s1``/``s2``; uniform in ``s3``."""
    probs = np.zeros((1, 3, 2, 2, 1))
    for s in (0, 1):
        probs[0, s, 0, 1, 0] = probs[0, s, 1, 0, 0] = 0.5
    probs[0, 2] = 0.25
    return CorrelatedPolicy(probs, stationary=stationary)


def build_finite_example() -> Example:
    """Two reward steps from ``s1``."""
    layer = _states()
    game = MarkovGame((2, 2, 1), (layer, layer), np.array([1.0, 0.0, 0.0]), Finite(2))
    published = {
        "value_sigma": Fraction(1, 20),
        "deviations": dict(zip(DEVIATIONS, (Fraction(-7, 40), Fraction(0), Fraction(-1, 5), Fraction(1, 20)))),
        "value_marginal": Fraction(-13, 160),
        "deviation_vs_marginal": Fraction(0),
        "ne_gap": Fraction(13, 160),
    }
    return Example("finite", game, cce_sigma(), published)


def build_infinite_example() -> Example:
    """Discount 2/3 from the uniform initial distribution."""
    game = MarkovGame((2, 2, 1), (_states(),), np.full(3, 1.0 / 3.0), Discounted(float(GAMMA)))
    F = Fraction
    published = {
        "value_sigma": F(-1, 10),
        "deviations": dict(zip(DEVIATIONS, (F(-2, 5), F(-1, 6), F(-5, 16), F(-5, 16)))),
        "value_marginal": F(-3, 10),
        "deviation_vs_marginal": F(-1, 6),
        "ne_gap": F(2, 15),
        "resolvent_sigma": [[F(9, 5), F(6, 5), F(0)], [F(6, 5), F(9, 5), F(0)], [F(1), F(1), F(1)]],
        "resolvent_marginal": [
            [F(34, 21), F(20, 21), F(3, 7)],
            [F(20, 21), F(34, 21), F(3, 7)],
            [F(6, 7), F(6, 7), F(9, 7)],
        ],
    }
    return Example("infinite", game, cce_sigma(stationary=True), published)


def build_example(name: str) -> Example:
    if name == "finite":
        return build_finite_example()
    if name == "infinite":
        return build_infinite_example()
    raise ValueError(f"unknown example {name!r}; choose 'finite' or 'infinite'")


def deviation_factor(p: int, q: int) -> np.ndarray:
    """Player 1's stationary deterministic policy: ``a1`` in ``s1`` iff ``p``, in ``s2`` iff ``q``."""
    f = np.zeros((1, 3, 2))
    f[0, 0, 0 if p else 1] = 1.0
    f[0, 1, 0 if q else 1] = 1.0
    f[0, 2, 0] = 1.0
    return f


def value_at_rho(game: MarkovGame, policy, k: int = 0) -> float:
    return float(evaluate(game, policy).layer(0)[k] @ game.rho)


def deviation_values(example: Example, against=None) -> dict[tuple[int, int], float]:
    """Player 1's value for each deterministic deviation while player 2 keeps ``against`` (default ``sigma``)."""
    base = example.sigma if against is None else against
    return {pq: value_at_rho(example.game, with_factor(base, 0, deviation_factor(*pq))) for pq in DEVIATIONS}


def single_controller_variant(example: Example) -> MarkovGame:
    """Same rewards, but player 1 alone controls: rows average over a uniform ``b``."""
    game = example.game
    layers = tuple(
        tuple(StateInteraction(st.edges, (0,), st.transition.mean(axis=1)) for st in layer) for layer in game.layers
    )
    return MarkovGame(game.action_counts, layers, game.rho, game.horizon)


class NoCollapseFailure(AssertionError):
    pass


@dataclass(frozen=True)
class NoCollapseReport:
    name: str
    value_sigma: tuple[float, ...]
    value_marginal: tuple[float, ...]
    deviations: dict
    deviation_vs_marginal: float  # player 1 switching to a2 everywhere against the marginals
    cce: GapReport
    ne: GapReport
    required_gap: float

    @property
    def cce_gap(self) -> float:
        return self.cce.max_gap

    @property
    def ne_gap(self) -> float:
        return self.ne.max_gap

    @property
    def reference_gap(self) -> float:
        """Gain of the all-``a2`` deviation against the marginals."""
        return self.deviation_vs_marginal - self.value_marginal[0]

    @property
    def passed(self) -> bool:
        return self.cce_gap <= GAP_TOL and self.ne_gap >= self.required_gap - GAP_TOL

    def to_dict(self) -> dict:
        return {
            "example": self.name,
            "value_sigma": list(self.value_sigma),
            "value_marginal": list(self.value_marginal),
            "deviations": {f"p={p},q={q}": v for (p, q), v in self.deviations.items()},
            "deviation_vs_marginal": self.deviation_vs_marginal,
            "reference_gap": self.reference_gap,
            "cce_gap": self.cce_gap,
            "ne_gap": self.ne_gap,
            "required_gap": self.required_gap,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def no_collapse_report(example: Example) -> NoCollapseReport:
    game, sigma, pi = example.game, example.sigma, example.marginal
    vs = evaluate(game, sigma).layer(0) @ game.rho
    vp = evaluate(game, pi).layer(0) @ game.rho
    all_a2 = value_at_rho(game, with_factor(pi, 0, deviation_factor(0, 0)))
    return NoCollapseReport(
        name=example.name,
        value_sigma=tuple(float(v) for v in vs),
        value_marginal=tuple(float(v) for v in vp),
        deviations=deviation_values(example),
        deviation_vs_marginal=all_a2,
        cce=gap_report(game, sigma, tol=1e-12),
        ne=gap_report(game, pi, tol=1e-12),
        required_gap=float(example.published["ne_gap"]),
    )


def verify_no_collapse(example: Example) -> NoCollapseReport:
    """Check that ``sigma`` is an exact CCE whose marginals are far from Nash."""
    report = no_collapse_report(example)
    if report.cce_gap > GAP_TOL:
        raise NoCollapseFailure(f"{example.name}: sigma has CCE gap {report.cce_gap:.3g}, expected 0")
    if report.ne_gap < report.required_gap - GAP_TOL:
        raise NoCollapseFailure(
            f"{example.name}: marginal NE gap {report.ne_gap:.6g} is below {report.required_gap:.6g}"
        )
    return report


def resolvents(example: Example) -> tuple[np.ndarray, np.ndarray]:
    """``(I - gamma P)^{-1}`` under ``sigma`` and under its marginals (discounted example only)."""
    if example.game.is_finite:
        raise ValueError("resolvents exist only for the discounted example")
    return resolvent(example.game, example.sigma), resolvent(example.game, example.marginal)


def collapse_on_variant(example: Example) -> CollapseResult:
    """Collapse check for ``sigma`` on the single-controller variant, where the bound applies."""
    return collapse_cce(single_controller_variant(example), example.sigma)
