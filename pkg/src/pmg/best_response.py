"""Induced single-agent MDPs, exact best responses and equilibrium gaps."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from pmg.game import MarkovGame
from pmg.policy import CorrelatedPolicy, Policy, check_shape
from pmg.valuation import evaluate

TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class InducedMDP:
    """What player ``k`` faces when everyone else is frozen.

    ``rewards`` has shape ``(T, S, A_k)`` and ``transitions`` ``(T, S, A_k, S)``.
    For discounted games layer ``T-1`` repeats forever.
    """

    player: int
    rewards: np.ndarray
    transitions: np.ndarray
    gamma: float
    finite: bool

    @property
    def num_layers(self) -> int:
        return self.rewards.shape[0]


def _others_joint(policy: Policy, k: int, h: int, s: int) -> np.ndarray:
    joint = policy.joint(h, s)
    return joint.sum(axis=k)


def induce_mdp(game: MarkovGame, policy: Policy, k: int) -> InducedMDP:
    """Expected rewards and kernels for ``k`` against the others' joint marginal."""
    check_shape(game, policy)
    if not 0 <= k < game.n:
        raise IndexError(f"player {k} out of range")
    T = game.num_layers if game.is_finite else policy.num_layers
    S, A = game.num_states, game.action_counts[k]
    rbar = np.empty((T, S, A))
    pbar = np.empty((T, S, A, S))
    for h in range(T):
        for s in range(S):
            others = _others_joint(policy, k, h, s)
            m = others.ndim
            Rk = np.moveaxis(game.reward_tensor(h, s)[k], k, 0)
            rbar[h, s] = np.tensordot(Rk, others, axes=m) if m else Rk
            st = game.state(h, s)
            if st.controllers == (k,):
                pbar[h, s] = st.transition
            else:
                Pk = np.moveaxis(game.transition_tensor(h, s), k, 0)
                pbar[h, s] = np.tensordot(Pk, others, axes=([i + 1 for i in range(m)], list(range(m))))
    return InducedMDP(k, rbar, pbar, game.gamma, game.is_finite)


def _greedy(q: np.ndarray) -> np.ndarray:
    """Lowest action index among the maximizers, per row."""
    best = q.max(axis=-1, keepdims=True)
    return np.argmax(q >= best - TIE_TOL, axis=-1)


@dataclass(frozen=True, eq=False)
class BestResponse:
    player: int
    factor: np.ndarray  # deterministic, shape (T, S, A_k)
    values: np.ndarray  # shape (T, S)
    value_at_rho: float


def _one_hot(actions: np.ndarray, A: int) -> np.ndarray:
    out = np.zeros(actions.shape + (A,))
    np.put_along_axis(out, actions[..., None], 1.0, axis=-1)
    return out


def solve_finite_mdp(mdp: InducedMDP) -> tuple[np.ndarray, np.ndarray]:
    T, S, A = mdp.rewards.shape
    w = np.zeros((T + 1, S))
    act = np.empty((T, S), dtype=int)
    for h in reversed(range(T)):
        q = mdp.rewards[h] + mdp.transitions[h] @ w[h + 1]
        act[h] = _greedy(q)
        w[h] = np.take_along_axis(q, act[h][:, None], axis=1)[:, 0]
    return act, w[:T]


def best_response_finite(game: MarkovGame, policy: Policy, k: int) -> BestResponse:
    """Exact dynamic program on the induced MDP; ties go to the lowest action."""
    if not game.is_finite:
        raise ValueError("best_response_finite needs a finite-horizon game")
    mdp = induce_mdp(game, policy, k)
    act, w = solve_finite_mdp(mdp)
    return BestResponse(k, _one_hot(act, game.action_counts[k]), w, float(w[0] @ game.rho))


def _policy_values(r: np.ndarray, P: np.ndarray, act: np.ndarray, gamma: float) -> np.ndarray:
    S = r.shape[0]
    idx = np.arange(S)
    return np.linalg.solve(np.eye(S) - gamma * P[idx, act], r[idx, act])


def solve_stationary_mdp(r: np.ndarray, P: np.ndarray, gamma: float, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Optimal stationary policy and its exact values.

    Value iteration runs until the sup-norm residual is at most
    ``tol (1 - gamma) / (2 gamma)``, which makes the greedy policy
    ``tol``-optimal. Policy-improvement sweeps with exact evaluation then run
    until no action improves by more than ``TIE_TOL``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    S, A = r.shape
    v = np.zeros(S)
    threshold = tol * (1.0 - gamma) / (2.0 * gamma)
    while True:
        nv = (r + gamma * P @ v).max(axis=1)
        done = np.max(np.abs(nv - v)) <= threshold
        v = nv
        if done:
            break
    act = _greedy(r + gamma * P @ v)
    v = _policy_values(r, P, act, gamma)
    for _ in range(100 * S * A):
        q = r + gamma * P @ v
        cur = q[np.arange(S), act]
        better = q.max(axis=1) > cur + TIE_TOL
        if not better.any():
            break
        act = np.where(better, _greedy(q), act)
        v = _policy_values(r, P, act, gamma)
    return act, v


def best_response_discounted(game: MarkovGame, policy: Policy, k: int, tol: float = 1e-9) -> BestResponse:
    """Best response in a discounted game.

    The stationary tail (the policy's last layer) is solved by value iteration
    plus exact policy evaluation; any earlier nonstationary layers are then
    handled by backward induction on top of those tail values.
    """
    if game.is_finite:
        raise ValueError("best_response_discounted needs a discounted game")
    mdp = induce_mdp(game, policy, k)
    T, S, A = mdp.rewards.shape
    g = game.gamma
    act = np.empty((T, S), dtype=int)
    w = np.empty((T, S))
    act[T - 1], w[T - 1] = solve_stationary_mdp(mdp.rewards[T - 1], mdp.transitions[T - 1], g, tol)
    for t in reversed(range(T - 1)):
        q = mdp.rewards[t] + g * mdp.transitions[t] @ w[t + 1]
        act[t] = _greedy(q)
        w[t] = np.take_along_axis(q, act[t][:, None], axis=1)[:, 0]
    return BestResponse(k, _one_hot(act, A), w, float(w[0] @ game.rho))


def best_response(game: MarkovGame, policy: Policy, k: int, tol: float = 1e-9) -> BestResponse:
    if game.is_finite:
        return best_response_finite(game, policy, k)
    return best_response_discounted(game, policy, k, tol)


@dataclass(frozen=True)
class GapReport:
    """Per-player deviation incentives of a (product or correlated) policy at ``rho``."""

    kind: str  # "NE" for product policies, "CCE" for correlated ones
    best_response_values: tuple[float, ...]
    current_values: tuple[float, ...]
    gaps: tuple[float, ...]

    @property
    def max_gap(self) -> float:
        return max(self.gaps)

    @property
    def sum_gap(self) -> float:
        return float(sum(self.gaps))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "best_response_values": list(self.best_response_values),
            "current_values": list(self.current_values),
            "gaps": list(self.gaps),
            "max_gap": self.max_gap,
            "sum_gap": self.sum_gap,
        }


def gap_report(game: MarkovGame, policy: Policy, tol: float = 1e-9, jobs: int = 1) -> GapReport:
    """``max(0, V^{dagger, policy_{-k}}(rho) - V^{policy}_k(rho))`` for every player."""
    check_shape(game, policy)
    current = evaluate(game, policy).layer(0) @ game.rho

    def br(k):
        return best_response(game, policy, k, tol).value_at_rho

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            brv = list(pool.map(br, range(game.n)))
    else:
        brv = [br(k) for k in range(game.n)]
    gaps = tuple(max(0.0, float(b - c)) for b, c in zip(brv, current))
    kind = "CCE" if isinstance(policy, CorrelatedPolicy) else "NE"
    return GapReport(kind, tuple(float(b) for b in brv), tuple(float(c) for c in current), gaps)
