"""One-shot zero-sum polymatrix stage games and their no-regret solver.

A stage game at ``(h, s)`` pays each player its edge payoffs plus the expected
continuation value. Under switching control that continuation depends only on
the controller's action, so it is a unary term ``g_k(a_c)`` and the stage game
stays polymatrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from pmg.game import MarkovGame


class StructuralError(ValueError):
    pass


CONTINUATION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class StageGame:
    """Edge payoffs ``edges[(k, j)][a_k, a_j]`` plus ``unary[k][a_c]`` for controller ``c``."""

    action_counts: tuple[int, ...]
    edges: dict[tuple[int, int], np.ndarray]
    unary: np.ndarray | None = None
    controller: int | None = None

    @property
    def n(self) -> int:
        return len(self.action_counts)

    def dense(self, amax: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Pairwise tensor ``M[k, j, a, b]`` and own-action vector ``U0[k, a]``, zero padded.

        Unary terms of non-controllers are folded into their interaction with
        the controller (constant in their own action); the controller's unary
        term becomes an own-action payoff.
        """
        n, counts = self.n, self.action_counts
        amax = amax or max(counts)
        M = np.zeros((n, n, amax, amax))
        U0 = np.zeros((n, amax))
        for (k, j), m in self.edges.items():
            M[k, j, : counts[k], : counts[j]] += m
        if self.unary is not None:
            c = self.controller
            for k in range(n):
                if k == c:
                    U0[c, : counts[c]] += self.unary[c]
                else:
                    M[k, c, : counts[k], : counts[c]] += self.unary[k][None, :]
        return M, U0


def build_stage(game: MarkovGame, h: int, s: int, continuation: np.ndarray | None = None) -> StageGame:
    """Stage game at ``(h, s)`` given next-step values ``continuation[k, s']``.

    Two-player games may have several controllers: their continuation is a
    full bimatrix and goes straight into the single edge.
    """
    st = game.state(h, s)
    n, counts = game.n, game.action_counts
    edges = {e: m.copy() for e, m in st.edges.items()}
    if continuation is None or not np.any(continuation):
        if len(st.controllers) == 1:
            return StageGame(counts, edges, np.zeros((n, counts[st.controller])), st.controller)
        return StageGame(counts, edges)
    w = np.asarray(continuation, dtype=float)
    drift = np.max(np.abs(w.sum(axis=0)))
    if drift > CONTINUATION_TOL:
        raise StructuralError(f"continuation values at h={h + 1} sum to {drift:.3g}, not zero")
    if len(st.controllers) == 1:
        c = st.controller
        g = st.transition @ w.T  # (A_c, n)
        g = g.T - g.sum(axis=1)[None, :] / n
        return StageGame(counts, edges, g, c)
    if n != 2:
        raise StructuralError(f"state ({h}, {s}) has controllers {st.controllers}: stage game is not polymatrix")
    C = np.tensordot(game.transition_tensor(h, s), w, axes=([2], [1]))  # (A_0, A_1, 2)
    C0 = (C[..., 0] - C[..., 1]) / 2.0
    edges[(0, 1)] = edges.get((0, 1), np.zeros((counts[0], counts[1]))) + C0
    edges[(1, 0)] = edges.get((1, 0), np.zeros((counts[1], counts[0]))) - C0.T
    return StageGame(counts, edges)


def _utilities(M2: np.ndarray, U0: np.ndarray, x: np.ndarray) -> np.ndarray:
    B, n, amax = x.shape
    return (M2 @ x.reshape(B, n * amax, 1)).reshape(B, n, amax) + U0


def stage_values(stage: StageGame, profile: Sequence[np.ndarray]) -> np.ndarray:
    """Exact expected payoff of every player under a product profile."""
    M, U0 = stage.dense()
    amax = M.shape[-1]
    x = np.zeros((stage.n, amax))
    for k, p in enumerate(profile):
        x[k, : len(p)] = p
    u = np.einsum("kjab,jb->ka", M, x) + U0
    return (x * u).sum(axis=1)


def certified_gaps(stage: StageGame, profile: Sequence[np.ndarray]) -> np.ndarray:
    """Per-player gain from the best pure deviation against ``profile``."""
    M, U0 = stage.dense()
    amax = M.shape[-1]
    x = np.zeros((stage.n, amax))
    for k, p in enumerate(profile):
        x[k, : len(p)] = p
    u = np.einsum("kjab,jb->ka", M, x) + U0
    best = np.array([u[k, : a].max() for k, a in enumerate(stage.action_counts)])
    return best - (x * u).sum(axis=1)


@dataclass(frozen=True, eq=False)
class StageSolution:
    strategies: tuple[np.ndarray, ...]
    values: np.ndarray
    gap: float
    iterations: int
    avg_regrets: np.ndarray
    converged: bool
    joint: np.ndarray | None = field(default=None, repr=False)


def _dominant_profile(M: np.ndarray, U0: np.ndarray, counts: tuple[int, ...]) -> list[int] | None:
    """Strictly dominant action of every player, or None.

    Payoffs are separable over neighbours, so the worst case of a payoff
    difference over all opponent profiles is the sum of per-neighbour minima.
    """
    out = []
    n = len(counts)
    for k in range(n):
        found = None
        for a in range(counts[k]):
            ok = True
            for b in range(counts[k]):
                if b == a:
                    continue
                worst = U0[k, a] - U0[k, b]
                for j in range(n):
                    if j != k:
                        worst += np.min(M[k, j, a, : counts[j]] - M[k, j, b, : counts[j]])
                if worst <= 0:
                    ok = False
                    break
            if ok:
                found = a
                break
        if found is None:
            return None
        out.append(found)
    return out


def _outer(x: np.ndarray) -> np.ndarray:
    B, n, amax = x.shape
    J = x[:, 0]
    for k in range(1, n):
        J = J[..., None] * x[:, k].reshape((B,) + (1,) * k + (amax,))
    return J


def solve_stages(
    stages: Sequence[StageGame],
    eps: float,
    max_iters: int = 200_000,
    seed: int | Sequence[int] = 0,
    learner: str = "omwu",
    record_joint: bool = False,
    step: float | None = None,
    check_every: int = 10,
    shortcut: bool = True,
) -> list[StageSolution]:
    """Run no-regret dynamics on a batch of stage games sharing action counts.

    Every game stops independently the first time the exact best-response gap
    of its time-averaged marginals is at most ``eps`` (checked every
    ``check_every`` rounds), so a game's result does not depend on the batch.
    ``seed`` only perturbs the starting point when ``learner`` ends in
    ``"-rand"``; the default start is uniform.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if learner not in ("omwu", "mwu", "omwu-rand", "mwu-rand"):
        raise ValueError(f"unknown learner {learner!r}")
    counts = stages[0].action_counts
    if any(g.action_counts != counts for g in stages):
        raise ValueError("batched stage games must share action counts")
    B, n, amax = len(stages), len(counts), max(counts)
    dense = [g.dense(amax) for g in stages]
    M = np.stack([d[0] for d in dense])
    U0 = np.stack([d[1] for d in dense])
    M2 = M.transpose(0, 1, 3, 2, 4).reshape(B, n * amax, n * amax)
    mask = np.arange(amax)[None, :] < np.array(counts)[:, None]

    scale = np.abs(M).max(axis=(3, 4)).sum(axis=2) + np.abs(U0).max(axis=2)  # (B, n)
    scale = scale.max(axis=1)
    scale[scale == 0] = 1.0
    optimistic = learner.startswith("omwu")
    if step is None:
        # plain MWU: the fixed-horizon rate sqrt(8 ln A / T) for payoffs spanning 2*scale
        step = 1.0 if optimistic else math.sqrt(8.0 * math.log(max(amax, 2)) / max_iters) / 2.0
    eta = (step / scale)[:, None, None]

    seeds = [seed] * B if isinstance(seed, (int, np.integer)) else list(seed)
    logits0 = np.zeros((B, n, amax))
    if learner.endswith("-rand"):
        for b, sd in enumerate(seeds):
            logits0[b] = np.random.default_rng(sd).normal(scale=0.1, size=(n, amax))

    def softmax(z):
        z = np.where(mask, z, -np.inf)
        z = z - z.max(axis=2, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=2, keepdims=True)

    results: list[StageSolution | None] = [None] * B
    done = np.zeros(B, dtype=bool)

    def finish(b, xbar, gap, t, regrets, jbar, converged):
        strategies = tuple(xbar[k, : counts[k]].copy() for k in range(n))
        vals = stage_values(stages[b], strategies)
        joint = None
        if jbar is not None:
            joint = jbar[tuple(slice(0, c) for c in counts)].copy()
        results[b] = StageSolution(strategies, vals, float(gap), int(t), regrets.copy(), converged, joint)
        done[b] = True

    if shortcut:
        for b in range(B):
            prof = _dominant_profile(M[b], U0[b], counts)
            if prof is None:
                continue
            x = np.zeros((n, amax))
            x[np.arange(n), prof] = 1.0
            gap = certified_gaps(stages[b], [x[k, : counts[k]] for k in range(n)]).max()
            jbar = _outer(x[None])[0] if record_joint else None
            finish(b, x, gap, 0, np.zeros(n), jbar, True)

    x = softmax(logits0)
    ucum = np.zeros((B, n, amax))
    xsum = np.zeros((B, n, amax))
    realized = np.zeros((B, n))
    jsum = np.zeros((B,) + (amax,) * n) if record_joint else None
    t = 0
    while t < max_iters and not done.all():
        t += 1
        u = _utilities(M2, U0, x)
        realized += (x * u).sum(axis=2)
        ucum += u
        xsum += x
        if record_joint:
            jsum += _outer(x)
        if t % check_every == 0 or t == max_iters:
            xbar = xsum / t
            ubar = _utilities(M2, U0, xbar)
            best = np.where(mask, ubar, -np.inf).max(axis=2)
            gaps = (best - (xbar * ubar).sum(axis=2)).max(axis=1)
            regrets = (np.where(mask, ucum, -np.inf).max(axis=2) - realized) / t
            for b in np.flatnonzero(~done):
                if gaps[b] <= eps or t == max_iters:
                    finish(b, xbar[b], gaps[b], t, regrets[b], None if jsum is None else jsum[b] / t, gaps[b] <= eps)
        z = logits0 + eta * (ucum + u if optimistic else ucum)
        x = softmax(z)
    return results  # type: ignore[return-value]


def solve_stage(
    stage: StageGame,
    eps: float,
    max_iters: int = 200_000,
    seed: int = 0,
    learner: str = "omwu",
    record_joint: bool = False,
) -> StageSolution:
    """Approximate NE of one stage game: averaged marginals of no-regret play.

    The reported gap is the exact best-response gap of the returned profile,
    never the learner's regret estimate. Non-convergence within ``max_iters``
    is reported through ``converged=False``.
    """
    return solve_stages([stage], eps, max_iters, seed, learner, record_joint)[0]
