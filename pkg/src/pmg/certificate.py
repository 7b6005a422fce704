"""Feasibility and objective of the nonlinear Nash programs.

For a product policy ``pi`` and candidate values ``w`` the program asks, for
every player ``k``, timestep ``h``, state ``s`` and own action ``a``::

    w[k, h, s] >= r_k(h, s, a, pi_{-k}) + gamma * P(h, s, a, pi_{-k}) @ w[k, h+1]

and minimizes ``sum_k rho @ (w[k, 0] - V_k^pi)``. Any feasible ``w`` dominates
the best-response values, so the objective upper-bounds the sum of NE gaps and
is never negative. These functions only evaluate the program; nothing here
optimizes it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pmg.best_response import GapReport, best_response, gap_report, induce_mdp
from pmg.game import MarkovGame
from pmg.policy import ProductPolicy, check_shape
from pmg.valuation import ValueTable, evaluate, step_matrices

FEASIBILITY_TOL = 1e-9
BOUND_TOL = 1e-6
CONVENTIONS = ("post", "padded")


class InfeasibleError(ValueError):
    pass


class BoundViolation(AssertionError):
    pass


@dataclass(frozen=True)
class CertificateReport:
    objective: float
    objective_alt: float  # same objective by an independent route (zero-sum form or resolvent)
    max_violation: float
    constraint_violation: float
    boundary_violation: float
    simplex_violation: float
    residuals: tuple[float, ...]  # rho @ (w[k, 0] - V_k) per player
    threshold: float
    convention: str

    @property
    def feasible(self) -> bool:
        return self.max_violation <= FEASIBILITY_TOL

    @property
    def verdict(self) -> str:
        return "PASS" if self.feasible and self.objective <= self.threshold else "FAIL"

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "objective_alt": self.objective_alt,
            "max_violation": self.max_violation,
            "constraint_violation": self.constraint_violation,
            "boundary_violation": self.boundary_violation,
            "simplex_violation": self.simplex_violation,
            "residuals": list(self.residuals),
            "threshold": self.threshold,
            "feasible": self.feasible,
            "convention": self.convention,
            "verdict": self.verdict,
        }


def _simplex_violation(pi: ProductPolicy) -> float:
    worst = 0.0
    for f in pi.factors:
        worst = max(worst, float(-f.min()), float(np.abs(f.sum(axis=-1) - 1.0).max()))
    return worst


def _as_values(w) -> np.ndarray:
    return np.asarray(w.values if isinstance(w, ValueTable) else w, dtype=float)


def pne_check_finite(
    game: MarkovGame,
    pi: ProductPolicy,
    w,
    threshold: float = 0.0,
    convention: str = "post",
) -> CertificateReport:
    """Evaluate the finite-horizon program at ``(pi, w)``.

    With ``convention="post"`` the values have one layer per reward step,
    shape ``(n, H, S)``, and ``w[:, H]`` is implicitly zero. With
    ``convention="padded"`` they carry an explicit terminal layer, shape
    ``(n, H + 1, S)``, whose required zero is checked as a boundary constraint.
    """
    if not game.is_finite:
        raise ValueError("pne_check_finite needs a finite-horizon game")
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    if not isinstance(pi, ProductPolicy):
        raise TypeError("the program is over product policies")
    check_shape(game, pi)
    n, H, S = game.n, game.num_layers, game.num_states
    w = _as_values(w)
    expected = (n, H + 1, S) if convention == "padded" else (n, H, S)
    if w.shape != expected:
        raise ValueError(f"values have shape {w.shape}, expected {expected} under convention {convention!r}")
    boundary = 0.0
    if convention == "padded":
        boundary = float(np.abs(w[:, H]).max())
    full = np.concatenate([w[:, :H], np.zeros((n, 1, S))], axis=1)

    worst = 0.0
    for k in range(n):
        mdp = induce_mdp(game, pi, k)
        for h in range(H):
            q = mdp.rewards[h] + mdp.transitions[h] @ full[k, h + 1]  # (S, A_k)
            worst = max(worst, float((q - full[k, h][:, None]).max()))
    V = evaluate(game, pi).layer(0) @ game.rho
    w0 = full[:, 0] @ game.rho
    residuals = w0 - V
    simplex = _simplex_violation(pi)
    return CertificateReport(
        objective=float(residuals.sum()),
        objective_alt=float(w0.sum()),
        max_violation=max(worst, boundary, simplex),
        constraint_violation=worst,
        boundary_violation=boundary,
        simplex_violation=simplex,
        residuals=tuple(float(x) for x in residuals),
        threshold=float(threshold),
        convention=convention,
    )


def _resolvent_values(game: MarkovGame, pi: ProductPolicy) -> np.ndarray:
    """``V[:, 0]`` through the explicit matrix ``(I - gamma P)^{-1}`` of the tail."""
    T, S, g = pi.num_layers, game.num_states, game.gamma
    r, P = step_matrices(game, pi, T - 1)
    R = np.linalg.inv(np.eye(S) - g * P)
    v = r @ R.T
    for t in reversed(range(T - 1)):
        r, P = step_matrices(game, pi, t)
        v = r + g * v @ P.T
    return v


def pne_check_discounted(
    game: MarkovGame,
    pi: ProductPolicy,
    w,
    gamma: float | None = None,
    threshold: float = 0.0,
) -> CertificateReport:
    """Evaluate the discounted program at ``(pi, w)``.

    A stationary ``pi`` pairs with per-state values, shape ``(n, 1, S)`` or
    ``(n, S)``. A policy with ``T`` layers (last one repeated forever) pairs
    with ``(n, T, S)``; the last layer's constraint is the stationary one.
    ``objective_alt`` recomputes the objective with the explicit resolvent.
    """
    if game.is_finite:
        raise ValueError("pne_check_discounted needs a discounted game")
    if gamma is not None and abs(gamma - game.gamma) > 1e-15:
        raise ValueError(f"gamma {gamma} does not match the game's {game.gamma}")
    if not isinstance(pi, ProductPolicy):
        raise TypeError("the program is over product policies")
    check_shape(game, pi)
    n, S, T, g = game.n, game.num_states, pi.num_layers, game.gamma
    w = _as_values(w)
    if w.ndim == 2 and T == 1:
        w = w[:, None, :]
    if w.shape != (n, T, S):
        raise ValueError(f"values have shape {w.shape}, expected {(n, T, S)}")

    worst = 0.0
    for k in range(n):
        mdp = induce_mdp(game, pi, k)
        for t in range(T):
            nxt = w[k, min(t + 1, T - 1)]
            q = mdp.rewards[t] + g * mdp.transitions[t] @ nxt
            worst = max(worst, float((q - w[k, t][:, None]).max()))
    V = evaluate(game, pi).layer(0) @ game.rho
    V_alt = _resolvent_values(game, pi) @ game.rho
    w0 = w[:, 0] @ game.rho
    residuals = w0 - V
    simplex = _simplex_violation(pi)
    return CertificateReport(
        objective=float(residuals.sum()),
        objective_alt=float((w0 - V_alt).sum()),
        max_violation=max(worst, simplex),
        constraint_violation=worst,
        boundary_violation=0.0,
        simplex_violation=simplex,
        residuals=tuple(float(x) for x in residuals),
        threshold=float(threshold),
        convention="post",
    )


def pne_check(game: MarkovGame, pi: ProductPolicy, w, threshold: float = 0.0) -> CertificateReport:
    if game.is_finite:
        return pne_check_finite(game, pi, w, threshold)
    return pne_check_discounted(game, pi, w, threshold=threshold)


def best_response_values(game: MarkovGame, pi: ProductPolicy, tol: float = 1e-12) -> np.ndarray:
    """The tightest feasible ``w``: each player's best-response values, shape ``(n, T, S)``."""
    return np.stack([best_response(game, pi, k, tol).values for k in range(game.n)])


def optimum_implies_ne(report: CertificateReport, game: MarkovGame, pi: ProductPolicy, w=None) -> GapReport:
    """Check that every player's NE gap is at most the certified objective.

    Raises ``InfeasibleError`` when the report is not feasible and
    ``BoundViolation`` when some gap exceeds ``objective + 1e-6``; otherwise
    returns the independently computed gap report.
    """
    if not report.feasible:
        raise InfeasibleError(f"point violates the program by {report.max_violation:.3g}")
    gaps = gap_report(game, pi)
    for k, gap in enumerate(gaps.gaps):
        if gap > report.objective + BOUND_TOL:
            raise BoundViolation(f"player {k} gains {gap:.6g} by deviating but the objective is {report.objective:.6g}")
    return gaps


def random_feasible_values(
    game: MarkovGame, pi: ProductPolicy, rng: np.random.Generator, slack: float = 1.0
) -> np.ndarray:
    """A random feasible ``w`` for ``pi``.

    Finite horizon: best-response backups plus a nonnegative random slack at
    every node. Discounted: the stationary tail gets ``V_dagger + d`` with
    ``d`` drawn in ``[gamma M, M]`` (so ``d >= gamma max d`` holds state-wise),
    and earlier layers are backed up with slack as in the finite case.
    """
    n, S = game.n, game.num_states
    g = game.gamma
    T = game.num_layers if game.is_finite else pi.num_layers
    base = best_response_values(game, pi)
    w = np.empty((n, T, S))
    for k in range(n):
        mdp = induce_mdp(game, pi, k)
        if game.is_finite:
            nxt = np.zeros(S)
        else:
            M = rng.uniform(0.0, slack)
            d = rng.uniform(g * M, M, size=S)
            d[rng.integers(S)] = M
            w[k, T - 1] = base[k, T - 1] + d
            nxt = w[k, T - 1]
        for t in reversed(range(T if game.is_finite else T - 1)):
            q = mdp.rewards[t] + g * mdp.transitions[t] @ nxt
            w[k, t] = q.max(axis=1) + rng.uniform(0.0, slack, size=S)
            nxt = w[k, t]
    return w
