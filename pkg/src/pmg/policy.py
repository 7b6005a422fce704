"""Product and correlated Markov policies, and marginalization."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from pmg.game import ENUMERATION_LIMIT, MarkovGame

PROB_TOL = 1e-12


class CapacityError(RuntimeError):
    pass


def _check_simplex(p: np.ndarray, axes: tuple[int, ...], what: str) -> None:
    if np.any(p < -PROB_TOL):
        raise ValueError(f"{what} has negative entries")
    sums = p.sum(axis=axes)
    if np.max(np.abs(sums - 1.0), initial=0.0) > 1e-9:
        raise ValueError(f"{what} does not sum to one (worst {sums.flat[np.argmax(np.abs(sums - 1.0))]!r})")


def _layer(num_layers: int, h: int) -> int:
    # Stationary policies have one layer; nonstationary ones repeat their last
    # layer past the end (used when a truncated policy is played in a discounted game).
    return min(h, num_layers - 1)


@dataclass(frozen=True, eq=False)
class ProductPolicy:
    """Independent per-player policies; ``factors[k]`` has shape ``(T, S, A_k)``."""

    factors: tuple[np.ndarray, ...]
    stationary: bool = False

    def __post_init__(self):
        factors = tuple(np.array(f, dtype=float) for f in self.factors)
        T, S = factors[0].shape[:2]
        for k, f in enumerate(factors):
            if f.ndim != 3 or f.shape[:2] != (T, S):
                raise ValueError(f"factor {k} has shape {f.shape}, expected ({T}, {S}, A_{k})")
            _check_simplex(f, (2,), f"factor {k}")
        if self.stationary and T != 1:
            raise ValueError("a stationary policy has exactly one layer")
        object.__setattr__(self, "factors", factors)

    @property
    def n(self) -> int:
        return len(self.factors)

    @property
    def num_layers(self) -> int:
        return self.factors[0].shape[0]

    @property
    def num_states(self) -> int:
        return self.factors[0].shape[1]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(f.shape[2] for f in self.factors)

    def strategy(self, k: int, h: int, s: int) -> np.ndarray:
        return self.factors[k][_layer(self.num_layers, h), s]

    def joint(self, h: int, s: int) -> np.ndarray:
        """Dense joint distribution at ``(h, s)``: the outer product of the factors."""
        t = _layer(self.num_layers, h)
        out = self.factors[0][t, s]
        for f in self.factors[1:]:
            out = np.multiply.outer(out, f[t, s])
        return out

    @classmethod
    def uniform(cls, game: MarkovGame, num_layers: int | None = None) -> ProductPolicy:
        T = num_layers if num_layers is not None else (game.num_layers if game.is_finite else 1)
        factors = tuple(np.full((T, game.num_states, a), 1.0 / a) for a in game.action_counts)
        return cls(factors, stationary=(T == 1 and not game.is_finite))


@dataclass(frozen=True, eq=False)
class CorrelatedPolicy:
    """Joint policy with shared randomness; ``probs`` has shape ``(T, S, A_0, ..., A_{n-1})``."""

    probs: np.ndarray
    stationary: bool = False

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim < 3:
            raise ValueError(f"correlated policy needs (T, S, *actions) axes, got shape {p.shape}")
        if int(np.prod(p.shape[2:])) > ENUMERATION_LIMIT:
            raise CapacityError(f"joint action set {p.shape[2:]} exceeds {ENUMERATION_LIMIT}")
        _check_simplex(p, tuple(range(2, p.ndim)), "correlated policy")
        if self.stationary and p.shape[0] != 1:
            raise ValueError("a stationary policy has exactly one layer")
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return self.probs.ndim - 2

    @property
    def num_layers(self) -> int:
        return self.probs.shape[0]

    @property
    def num_states(self) -> int:
        return self.probs.shape[1]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return self.probs.shape[2:]

    def joint(self, h: int, s: int) -> np.ndarray:
        return self.probs[_layer(self.num_layers, h), s]

    @classmethod
    def lift(cls, pi: ProductPolicy) -> CorrelatedPolicy:
        probs = np.stack(
            [np.stack([pi.joint(t, s) for s in range(pi.num_states)]) for t in range(pi.num_layers)]
        )
        return cls(probs, stationary=pi.stationary)


Policy = ProductPolicy | CorrelatedPolicy


def marginalize(sigma: CorrelatedPolicy) -> ProductPolicy:
    """Per-player marginals of a correlated policy."""
    n = sigma.n
    factors = []
    for k in range(n):
        others = tuple(2 + j for j in range(n) if j != k)
        factors.append(sigma.probs.sum(axis=others))
    return ProductPolicy(tuple(factors), stationary=sigma.stationary)


def marginal_excluding(sigma: Policy, k: int) -> np.ndarray:
    """Joint distribution of everyone but ``k``: shape ``(T, S, *A_{-k})``."""
    if isinstance(sigma, ProductPolicy):
        sigma = CorrelatedPolicy.lift(sigma)
    if not 0 <= k < sigma.n:
        raise IndexError(f"player {k} out of range")
    return sigma.probs.sum(axis=2 + k)


def check_shape(game: MarkovGame, policy: Policy) -> None:
    if tuple(policy.action_counts) != game.action_counts:
        raise ValueError(f"policy actions {policy.action_counts} != game actions {game.action_counts}")
    if policy.num_states != game.num_states:
        raise ValueError(f"policy has {policy.num_states} states, game has {game.num_states}")
    if game.is_finite and policy.num_layers not in (1, game.num_layers):
        raise ValueError(
            f"policy has {policy.num_layers} layers; finite game needs 1 or {game.num_layers}"
        )


def inert_states(game: MarkovGame, k: int, h: int) -> list[int]:
    """States at timestep ``h`` where player ``k``'s action affects neither its reward nor the transition."""
    out = []
    for s in range(game.num_states):
        r = game.reward_tensor(h, s)[k]
        p = game.transition_tensor(h, s)
        if np.ptp(r, axis=k).max(initial=0.0) == 0.0 and np.ptp(p, axis=k).max(initial=0.0) == 0.0:
            out.append(s)
    return out


def enumerate_deterministic(
    game: MarkovGame,
    k: int,
    stationary: bool | None = None,
    prune_inert: bool = False,
    limit: int = ENUMERATION_LIMIT,
) -> Iterator[np.ndarray]:
    """Yield every deterministic Markov factor of player ``k`` as a ``(T, S, A_k)`` array.

    ``stationary`` defaults to True for discounted games. With ``prune_inert``
    the states where ``k``'s action changes nothing for ``k`` are pinned to
    action 0 instead of enumerated.
    """
    if stationary is None:
        stationary = not game.is_finite
    T = 1 if stationary else game.num_layers
    A = game.action_counts[k]
    decisions: list[tuple[int, int]] = []
    for t in range(T):
        pinned: set[int] = set()
        if prune_inert:
            # a stationary layer is played at every game timestep
            used = range(game.num_layers) if stationary else [t]
            pinned = set.intersection(*(set(inert_states(game, k, h)) for h in used))
        decisions.extend((t, s) for s in range(game.num_states) if s not in pinned)
    total = A ** len(decisions)
    if total > limit:
        raise CapacityError(f"{total} deterministic policies for player {k} exceed the budget {limit}")
    for choice in itertools.product(range(A), repeat=len(decisions)):
        f = np.zeros((T, game.num_states, A))
        f[:, :, 0] = 1.0
        for (t, s), a in zip(decisions, choice):
            f[t, s, :] = 0.0
            f[t, s, a] = 1.0
        yield f


def with_factor(pi: Policy, k: int, factor: np.ndarray) -> Policy:
    """Replace player ``k``'s behaviour by ``factor`` while the others keep their (joint) policy."""
    factor = np.asarray(factor, dtype=float)
    if isinstance(pi, ProductPolicy):
        T = max(pi.num_layers, factor.shape[0])
        fs = [np.broadcast_to(f, (T,) + f.shape[1:]) if f.shape[0] == 1 else f for f in pi.factors]
        fk = np.broadcast_to(factor, (T,) + factor.shape[1:]) if factor.shape[0] == 1 else factor
        fs[k] = fk
        return ProductPolicy(tuple(fs), stationary=pi.stationary and T == 1)
    others = marginal_excluding(pi, k)
    T = max(others.shape[0], factor.shape[0])
    others = np.broadcast_to(others, (T,) + others.shape[1:])
    fk = np.broadcast_to(factor, (T,) + factor.shape[1:])
    probs = np.einsum("tsa,ts...->tsa...", fk, others)
    probs = np.moveaxis(probs, 2, 2 + k)
    return CorrelatedPolicy(probs, stationary=pi.stationary and T == 1)


def random_product(game: MarkovGame, rng: np.random.Generator, num_layers: int | None = None) -> ProductPolicy:
    T = num_layers if num_layers is not None else (game.num_layers if game.is_finite else 1)
    factors = tuple(rng.dirichlet(np.ones(a), size=(T, game.num_states)) for a in game.action_counts)
    return ProductPolicy(factors, stationary=(T == 1 and not game.is_finite))


def random_correlated(game: MarkovGame, rng: np.random.Generator, num_layers: int | None = None) -> CorrelatedPolicy:
    T = num_layers if num_layers is not None else (game.num_layers if game.is_finite else 1)
    m = int(np.prod(game.action_counts))
    flat = rng.dirichlet(np.ones(m), size=(T, game.num_states))
    return CorrelatedPolicy(
        flat.reshape((T, game.num_states) + game.action_counts), stationary=(T == 1 and not game.is_finite)
    )

