"""Exact value functions (finite and discounted) and a Monte-Carlo oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pmg.game import MarkovGame
from pmg.policy import Policy, check_shape


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Per-player, per-timestep, per-state values; ``values`` has shape ``(n, T, S)``."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def num_layers(self) -> int:
        return self.values.shape[1]

    def layer(self, h: int = 0) -> np.ndarray:
        return self.values[:, h, :]


def joint_marginal(joint: np.ndarray, keep: tuple[int, ...]) -> np.ndarray:
    """Marginal of a dense joint distribution on the axes ``keep``, in that order."""
    drop = tuple(i for i in range(joint.ndim) if i not in keep)
    m = joint.sum(axis=drop)
    order = np.argsort(np.argsort(keep))
    return np.transpose(m, tuple(order)) if len(keep) > 1 else m


def expected_step(game: MarkovGame, h: int, s: int, joint: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Expected rewards ``(n,)`` and next-state distribution ``(S,)`` under a joint distribution.

    The transition only needs the controllers' marginal of ``joint``.
    """
    R = game.reward_tensor(h, s)
    r = np.tensordot(R, joint, axes=joint.ndim)
    st = game.state(h, s)
    ctrl = joint_marginal(joint, st.controllers)
    p = np.tensordot(ctrl, st.transition, axes=len(st.controllers))
    return r, p


def step_matrices(game: MarkovGame, policy: Policy, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Reward vectors ``(n, S)`` and transition matrix ``(S, S)`` of the chain at timestep ``h``."""
    S = game.num_states
    r = np.empty((game.n, S))
    P = np.empty((S, S))
    for s in range(S):
        r[:, s], P[s] = expected_step(game, h, s, policy.joint(h, s))
    return r, P


def evaluate_finite(game: MarkovGame, policy: Policy) -> ValueTable:
    """Backward recursion ``V_h = r_h + P_h V_{h+1}`` with ``V_H = 0``."""
    if not game.is_finite:
        raise ValueError("evaluate_finite needs a finite-horizon game")
    check_shape(game, policy)
    H, S = game.num_layers, game.num_states
    V = np.zeros((game.n, H + 1, S))
    for h in reversed(range(H)):
        r, P = step_matrices(game, policy, h)
        V[:, h] = r + V[:, h + 1] @ P.T
    return ValueTable(V[:, :H])


def resolvent(game: MarkovGame, policy: Policy, h: int = 0) -> np.ndarray:
    """``(I - gamma P)^{-1}`` for the chain the policy induces at layer ``h``."""
    _, P = step_matrices(game, policy, h)
    S = game.num_states
    return np.linalg.solve(np.eye(S) - game.gamma * P, np.eye(S))


def _stationary_values(game: MarkovGame, policy: Policy, h: int) -> np.ndarray:
    r, P = step_matrices(game, policy, h)
    A = np.eye(game.num_states) - game.gamma * P
    return np.linalg.solve(A, r.T).T


def evaluate_discounted(game: MarkovGame, policy: Policy, gamma: float | None = None) -> ValueTable:
    """Discounted values via a dense linear solve per stationary tail.

    A stationary policy yields one layer. A nonstationary policy with ``T``
    layers is played layer by layer and then repeats its last layer forever;
    the table then has ``T`` layers.
    """
    if game.is_finite:
        raise ValueError("evaluate_discounted needs a discounted game")
    if gamma is not None and not math.isclose(gamma, game.gamma, rel_tol=0.0, abs_tol=1e-15):
        raise ValueError(f"gamma {gamma} does not match the game's {game.gamma}")
    check_shape(game, policy)
    T = policy.num_layers
    V = np.empty((game.n, T, game.num_states))
    V[:, T - 1] = _stationary_values(game, policy, T - 1)
    for t in reversed(range(T - 1)):
        r, P = step_matrices(game, policy, t)
        V[:, t] = r + game.gamma * V[:, t + 1] @ P.T
    return ValueTable(V)


def evaluate(game: MarkovGame, policy: Policy) -> ValueTable:
    return evaluate_finite(game, policy) if game.is_finite else evaluate_discounted(game, policy)


def evaluate_at_initial(values: ValueTable, rho: np.ndarray, h: int = 0) -> np.ndarray:
    return values.layer(h) @ np.asarray(rho, dtype=float)


def rollout_horizon(game: MarkovGame, tail: float = 1e-6) -> int:
    from pmg.solver import effective_horizon

    return game.num_layers if game.is_finite else effective_horizon(game.gamma, tail)


def monte_carlo_value(
    game: MarkovGame, policy: Policy, episodes: int, seed: int = 0, tail: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Mean discounted return per player from ``rho`` and its standard error.

    Discounted games are rolled out for ``effective_horizon(gamma, tail)``
    steps, which biases each player's estimate by at most
    ``(n-1) * gamma**H / (1 - gamma)``.
    """
    if episodes < 1:
        raise ValueError("need at least one episode")
    check_shape(game, policy)
    rng = np.random.default_rng(seed)
    S, n = game.num_states, game.n
    H = rollout_horizon(game, tail)
    states = rng.choice(S, size=episodes, p=game.rho)
    returns = np.zeros((n, episodes))
    discount = 1.0
    for h in range(H):
        nxt = np.empty_like(states)
        for s in range(S):
            idx = np.flatnonzero(states == s)
            if idx.size == 0:
                continue
            joint = policy.joint(h, s)
            flat = joint.ravel()
            cdf = np.cumsum(flat)
            a_flat = np.minimum(np.searchsorted(cdf, rng.random(idx.size) * cdf[-1], side="right"), flat.size - 1)
            R = game.reward_tensor(h, s).reshape(n, -1)
            returns[:, idx] += discount * R[:, a_flat]
            P = game.transition_tensor(h, s).reshape(-1, S)[a_flat]
            u = rng.random(idx.size)[:, None]
            nxt[idx] = np.minimum((np.cumsum(P, axis=1) < u * P.sum(axis=1, keepdims=True)).sum(axis=1), S - 1)
        states = nxt
        discount *= game.gamma
    mean = returns.mean(axis=1)
    se = returns.std(axis=1, ddof=1) / math.sqrt(episodes) if episodes > 1 else np.zeros(n)
    return mean, se
