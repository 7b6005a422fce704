"""Backward-induction Nash solver, discounted truncation, and CCE collapse."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from pmg.best_response import GapReport, gap_report
from pmg.game import Finite, MarkovGame, StateInteraction
from pmg.policy import CorrelatedPolicy, ProductPolicy, marginalize
from pmg.stage import build_stage, solve_stages
from pmg.valuation import ValueTable, expected_step


def stage_seed(seed: int, h: int, s: int) -> int:
    return int(np.random.SeedSequence([seed, h, s]).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class SolveReport:
    policy: ProductPolicy
    values: ValueTable
    stage_gaps: np.ndarray  # (H, S)
    iterations: np.ndarray  # (H, S)
    certified: GapReport
    eps: float
    runtime_s: float = field(default=0.0, compare=False)

    @property
    def certified_gap(self) -> float:
        return self.certified.max_gap

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "eps": self.eps,
            "certified_gap": self.certified_gap,
            "gap_report": self.certified.to_dict(),
            "stage_gaps": self.stage_gaps.tolist(),
            "iterations": self.iterations.tolist(),
            "values": self.values.values.tolist(),
            "policy": [f.tolist() for f in self.policy.factors],
        }
        if timing:
            out["runtime_ms"] = round(1000.0 * self.runtime_s, 3)
        return out


def _backward(game: MarkovGame, stage_tol: float, seed: int, max_iters: int, learner: str, record_joint: bool):
    H, S, n = game.num_layers, game.num_states, game.n
    w = np.zeros((n, H + 1, S))
    factors = [np.empty((H, S, a)) for a in game.action_counts]
    joints = np.empty((H, S) + game.action_counts) if record_joint else None
    gaps = np.zeros((H, S))
    iters = np.zeros((H, S), dtype=int)
    for h in reversed(range(H)):
        stages = [build_stage(game, h, s, w[:, h + 1]) for s in range(S)]
        sols = solve_stages(
            stages,
            stage_tol,
            max_iters=max_iters,
            seed=[stage_seed(seed, h, s) for s in range(S)],
            learner=learner,
            record_joint=record_joint,
        )
        for s, sol in enumerate(sols):
            for k in range(n):
                factors[k][h, s] = sol.strategies[k]
            gaps[h, s], iters[h, s] = sol.gap, sol.iterations
            if record_joint:
                joints[h, s] = sol.joint
                r, p = expected_step(game, h, s, sol.joint)
                w[:, h, s] = r + w[:, h + 1] @ p
            else:
                w[:, h, s] = sol.values
    return factors, joints, w[:, :H], gaps, iters


def solve_finite(
    game: MarkovGame,
    eps: float = 1e-2,
    seed: int = 0,
    max_iters: int = 200_000,
    learner: str = "omwu",
    jobs: int = 1,
) -> SolveReport:
    """Approximate NE by backward induction over stage games.

    Each stage is solved to gap ``eps / (2H)``; the returned gap is certified
    independently by exact best responses.
    """
    if not game.is_finite:
        raise ValueError("solve_finite needs a finite-horizon game")
    if eps <= 0:
        raise ValueError("eps must be positive")
    t0 = time.perf_counter()
    stage_tol = eps / (2 * game.num_layers)
    factors, _, w, gaps, iters = _backward(game, stage_tol, seed, max_iters, learner, False)
    policy = ProductPolicy(tuple(factors))
    cert = gap_report(game, policy, jobs=jobs)
    return SolveReport(policy, ValueTable(w), gaps, iters, cert, eps, time.perf_counter() - t0)


def effective_horizon(gamma: float, eps: float) -> int:
    """``ceil(log(1/eps) / (1 - gamma))``, at least 1."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    return max(1, math.ceil(math.log(1.0 / eps) / (1.0 - gamma)))


def truncate(game: MarkovGame, steps: int) -> MarkovGame:
    """Finite game with ``steps`` layers and rewards scaled by ``gamma**h``."""
    if game.is_finite:
        raise ValueError("only discounted games can be truncated")
    g = game.gamma
    layers = []
    for h in range(steps):
        scale = g**h
        layers.append(
            tuple(
                StateInteraction({e: scale * m for e, m in st.edges.items()}, st.controllers, st.transition)
                for st in game.layers[0]
            )
        )
    return MarkovGame(game.action_counts, tuple(layers), game.rho, Finite(steps))


def solve_discounted(
    game: MarkovGame,
    eps: float = 1e-2,
    seed: int = 0,
    max_iters: int = 200_000,
    learner: str = "omwu",
    jobs: int = 1,
) -> SolveReport:
    """Approximate NE of a discounted game through its effective-horizon truncation.

    Half of ``eps`` goes to the truncation, half to the finite solve. The
    policy is nonstationary; in the discounted game it plays its last layer
    forever after the truncation point, and its gap is certified there.
    """
    if game.is_finite:
        raise ValueError("solve_discounted needs a discounted game")
    t0 = time.perf_counter()
    g, n = game.gamma, game.n
    steps = effective_horizon(g, eps * (1.0 - g) / (4.0 * n))
    finite = truncate(game, steps)
    inner = solve_finite(finite, eps / 2.0, seed, max_iters, learner, jobs)
    cert = gap_report(game, inner.policy, jobs=jobs)
    return SolveReport(inner.policy, inner.values, inner.stage_gaps, inner.iterations, cert, eps, time.perf_counter() - t0)


def no_regret_cce(
    game: MarkovGame,
    iters: int = 2000,
    seed: int = 0,
    learner: str = "mwu",
    eps: float | None = None,
) -> CorrelatedPolicy:
    """Correlated policy from per-stage no-regret averaging.

    At every ``(h, s)`` the time-averaged joint play of the learners is kept as
    the correlated distribution; continuation values are those of that
    correlated policy. Runs a fixed ``iters`` rounds unless ``eps`` asks for an
    earlier stop.
    """
    if not game.is_finite:
        raise ValueError("no_regret_cce needs a finite-horizon game")
    tol = eps if eps is not None else 1e-300
    _, joints, _, _, _ = _backward(game, tol, seed, iters, learner, True)
    return CorrelatedPolicy(joints)


@dataclass(frozen=True, eq=False)
class CollapseResult:
    policy: ProductPolicy
    before: GapReport
    after: GapReport
    factor: float  # n for switching control, 2 for two players
    bound_applies: bool

    @property
    def bound(self) -> float:
        return self.factor * self.before.max_gap

    def holds(self, tol: float = 1e-6) -> bool:
        return self.after.max_gap <= self.bound + tol

    def to_dict(self) -> dict:
        return {
            "cce_gap": self.before.max_gap,
            "ne_gap": self.after.max_gap,
            "factor": self.factor,
            "bound": self.bound,
            "bound_applies": self.bound_applies,
            "cce": self.before.to_dict(),
            "marginal": self.after.to_dict(),
        }


def collapse_cce(game: MarkovGame, sigma: CorrelatedPolicy, tol: float = 1e-9) -> CollapseResult:
    """Marginalize ``sigma`` and certify both sides.

    The bound ``ne_gap <= n * cce_gap`` is only claimed (``bound_applies``)
    when every state has a single controller.
    """
    pi = marginalize(sigma)
    before = gap_report(game, sigma, tol)
    after = gap_report(game, pi, tol)
    return CollapseResult(pi, before, after, float(game.n), game.is_switching_control)


def collapse_two_player(game: MarkovGame, sigma: CorrelatedPolicy, tol: float = 1e-9) -> CollapseResult:
    if game.n != 2:
        raise ValueError(f"collapse_two_player needs two players, game has {game.n}")
    pi = marginalize(sigma)
    before = gap_report(game, sigma, tol)
    after = gap_report(game, pi, tol)
    return CollapseResult(pi, before, after, 2.0, True)
