"""Game data model for zero-sum polymatrix Markov games.

Indices are zero-based throughout: players ``0..n-1``, states ``0..S-1``,
timesteps ``0..H-1``. A finite game with ``steps=H`` collects rewards at every
one of its ``H`` layers and has zero continuation afterwards.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

STOCHASTIC_TOL = 1e-12
ZERO_SUM_TOL = 1e-9
ENUMERATION_LIMIT = 10**6
ZERO_SUM_SAMPLES = 10**4


@dataclass(frozen=True)
class Finite:
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"finite horizon needs a positive integer, got {self.steps!r}")

    @property
    def gamma(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Discounted:
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"discount factor must lie in (0, 1), got {self.gamma!r}")


Horizon = Finite | Discounted


@dataclass(frozen=True, eq=False)
class StateInteraction:
    """Interaction graph, edge payoffs and transition kernel of one state.

    ``edges[(k, j)]`` is player k's payoff matrix against j, indexed
    ``[a_k, a_j]``. ``transition`` is indexed by the controllers' actions
    followed by the next state. A single controller is the switching-control
    case; several controllers are only used to build counterexamples.
    """

    edges: Mapping[tuple[int, int], np.ndarray]
    controllers: tuple[int, ...]
    transition: np.ndarray

    def __post_init__(self):
        edges = {}
        for (k, j), m in self.edges.items():
            k, j = int(k), int(j)
            if k == j:
                raise ValueError(f"self-edge ({k}, {j}) is not allowed")
            edges[(k, j)] = np.array(m, dtype=float)
        object.__setattr__(self, "edges", dict(sorted(edges.items())))
        ctrl = self.controllers
        if isinstance(ctrl, (int, np.integer)):
            ctrl = (ctrl,)
        ctrl = tuple(int(c) for c in ctrl)
        if not ctrl or len(set(ctrl)) != len(ctrl):
            raise ValueError(f"controllers must be distinct and non-empty, got {ctrl}")
        object.__setattr__(self, "controllers", ctrl)
        trans = np.array(self.transition, dtype=float)
        if trans.ndim != len(ctrl) + 1:
            raise ValueError(
                f"transition has {trans.ndim} axes; expected {len(ctrl) + 1} for controllers {ctrl}"
            )
        object.__setattr__(self, "transition", trans)

    @property
    def controller(self) -> int:
        if len(self.controllers) != 1:
            raise ValueError(f"state has {len(self.controllers)} controllers, not one")
        return self.controllers[0]

    def neighbors(self, k: int) -> frozenset[int]:
        return frozenset(j for (i, j) in self.edges if i == k)


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """A multi-player Markov game with pairwise (polymatrix) rewards.

    ``layers[h][s]`` describes state ``s`` at timestep ``h``. Discounted games
    carry exactly one time-homogeneous layer.
    """

    action_counts: tuple[int, ...]
    layers: tuple[tuple[StateInteraction, ...], ...]
    rho: np.ndarray
    horizon: Horizon
    _dense_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        counts = tuple(int(a) for a in self.action_counts)
        if not counts or min(counts) < 1:
            raise ValueError(f"every player needs at least one action, got {counts}")
        object.__setattr__(self, "action_counts", counts)
        layers = tuple(tuple(layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        rho = np.array(self.rho, dtype=float)
        object.__setattr__(self, "rho", rho)
        if not layers or not layers[0]:
            raise ValueError("game needs at least one layer with one state")
        n, S = len(counts), len(layers[0])
        if isinstance(self.horizon, Finite) and len(layers) != self.horizon.steps:
            raise ValueError(f"finite horizon {self.horizon.steps} but {len(layers)} layers")
        if isinstance(self.horizon, Discounted) and len(layers) != 1:
            raise ValueError("discounted games are time-homogeneous: exactly one layer")
        if rho.shape != (S,):
            raise ValueError(f"rho has shape {rho.shape}, expected ({S},)")
        for h, layer in enumerate(layers):
            if len(layer) != S:
                raise ValueError(f"layer {h} has {len(layer)} states, expected {S}")
            for s, st in enumerate(layer):
                where = f"layers[{h}][{s}]"
                for (k, j), m in st.edges.items():
                    if not (0 <= k < n and 0 <= j < n):
                        raise ValueError(f"{where}: edge ({k}, {j}) names an unknown player")
                    if m.shape != (counts[k], counts[j]):
                        raise ValueError(
                            f"{where}: edge ({k}, {j}) payoff shape {m.shape}, "
                            f"expected {(counts[k], counts[j])}"
                        )
                for c in st.controllers:
                    if not 0 <= c < n:
                        raise ValueError(f"{where}: controller {c} out of range")
                expected = tuple(counts[c] for c in st.controllers) + (S,)
                if st.transition.shape != expected:
                    raise ValueError(
                        f"{where}: transition shape {st.transition.shape}, expected {expected}"
                    )

    @property
    def n(self) -> int:
        return len(self.action_counts)

    @property
    def num_states(self) -> int:
        return len(self.layers[0])

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def gamma(self) -> float:
        return self.horizon.gamma

    @property
    def is_finite(self) -> bool:
        return isinstance(self.horizon, Finite)

    @cached_property
    def is_switching_control(self) -> bool:
        return all(len(st.controllers) == 1 for layer in self.layers for st in layer)

    def state(self, h: int, s: int) -> StateInteraction:
        if not 0 <= s < self.num_states:
            raise IndexError(f"state {s} out of range [0, {self.num_states})")
        if self.is_finite:
            if not 0 <= h < self.num_layers:
                raise IndexError(f"timestep {h} out of range [0, {self.num_layers})")
            return self.layers[h][s]
        if h < 0:
            raise IndexError(f"timestep {h} is negative")
        return self.layers[0][s]

    def _layer_index(self, h: int) -> int:
        return h if self.is_finite else 0

    def reward_tensor(self, h: int, s: int) -> np.ndarray:
        """Dense rewards ``R[k, a_0, ..., a_{n-1}]`` of all players at ``(h, s)``."""
        key = ("r", self._layer_index(h), s)
        if key not in self._dense_cache:
            st = self.state(h, s)
            n, counts = self.n, self.action_counts
            if int(np.prod(counts)) > ENUMERATION_LIMIT:
                raise MemoryError(f"joint action set {counts} too large for dense rewards")
            out = np.zeros((n,) + counts)
            for (k, j), m in st.edges.items():
                shape = [1] * n
                shape[k], shape[j] = counts[k], counts[j]
                mm = m if k < j else m.T
                out[k] += mm.reshape(shape)
            self._dense_cache[key] = out
        return self._dense_cache[key]

    def transition_tensor(self, h: int, s: int) -> np.ndarray:
        """Dense kernel ``P[a_0, ..., a_{n-1}, s']`` broadcast from the controllers."""
        key = ("p", self._layer_index(h), s)
        if key not in self._dense_cache:
            st = self.state(h, s)
            order = np.argsort(st.controllers)
            ctrl_sorted = [st.controllers[i] for i in order]
            t = np.transpose(st.transition, tuple(order) + (len(order),))
            shape = [1] * self.n + [self.num_states]
            for c in ctrl_sorted:
                shape[c] = self.action_counts[c]
            full = np.broadcast_to(t.reshape(shape), self.action_counts + (self.num_states,))
            self._dense_cache[key] = np.ascontiguousarray(full)
        return self._dense_cache[key]

    def equals(self, other: MarkovGame, atol: float = 0.0) -> bool:
        """Structural equality, with optional numeric tolerance."""

        def close(x, y):
            x, y = np.asarray(x), np.asarray(y)
            return x.shape == y.shape and np.allclose(x, y, rtol=0.0, atol=atol)

        if (
            self.action_counts != other.action_counts
            or self.horizon != other.horizon
            or self.num_layers != other.num_layers
            or self.num_states != other.num_states
            or not close(self.rho, other.rho)
        ):
            return False
        for la, lb in zip(self.layers, other.layers):
            for a, b in zip(la, lb):
                if a.controllers != b.controllers or a.edges.keys() != b.edges.keys():
                    return False
                if not close(a.transition, b.transition):
                    return False
                if not all(close(a.edges[e], b.edges[e]) for e in a.edges):
                    return False
        return True


def _check_joint(game: MarkovGame, a: Sequence[int]) -> tuple[int, ...]:
    a = tuple(int(x) for x in a)
    if len(a) != game.n:
        raise IndexError(f"joint action has {len(a)} entries, expected {game.n}")
    for k, (ak, ck) in enumerate(zip(a, game.action_counts)):
        if not 0 <= ak < ck:
            raise IndexError(f"action {ak} of player {k} out of range [0, {ck})")
    return a


def reward(game: MarkovGame, h: int, s: int, k: int, a: Sequence[int]) -> float:
    """Player ``k``'s reward: the sum of its edge payoffs against its neighbors."""
    if not 0 <= k < game.n:
        raise IndexError(f"player {k} out of range [0, {game.n})")
    a = _check_joint(game, a)
    st = game.state(h, s)
    return float(sum(m[a[k], a[j]] for (i, j), m in st.edges.items() if i == k))


def adjacency(game: MarkovGame, h: int, s: int, k: int) -> frozenset[int]:
    if not 0 <= k < game.n:
        raise IndexError(f"player {k} out of range [0, {game.n})")
    return game.state(h, s).neighbors(k)


def controller_action(game: MarkovGame, h: int, s: int, a: Sequence[int]) -> int:
    a = _check_joint(game, a)
    return a[game.state(h, s).controller]


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.where}: {self.detail}"


def validate(game: MarkovGame, seed: int = 0) -> list[Violation]:
    """Check stochasticity, edge symmetry, payoff range and the zero-sum property.

    Never raises on a constructed game. Zero-sum is checked exhaustively when
    the joint action set has at most ``ENUMERATION_LIMIT`` elements; otherwise
    by the per-edge constant-pair-sum test plus random joint-action samples.
    """
    out: list[Violation] = []
    rho = game.rho
    if np.any(rho < 0) or abs(rho.sum() - 1.0) > STOCHASTIC_TOL:
        out.append(Violation("stochasticity", "rho", f"sum {float(rho.sum())!r}, min {float(rho.min())!r}"))
    counts = game.action_counts
    n_joint = int(np.prod(counts))
    rng = np.random.default_rng(seed)
    for h, layer in enumerate(game.layers):
        for s, st in enumerate(layer):
            where = f"layers[{h}][{s}]"
            rows = st.transition.reshape(-1, game.num_states)
            for idx, row in zip(itertools.product(*(range(counts[c]) for c in st.controllers)), rows):
                if np.any(row < 0) or abs(row.sum() - 1.0) > STOCHASTIC_TOL:
                    path = "".join(f"[{i}]" for i in idx)
                    out.append(
                        Violation("stochasticity", f"{where}.transition{path}", f"row sums to {float(row.sum())!r}")
                    )
            for (k, j), m in st.edges.items():
                if (j, k) not in st.edges:
                    out.append(Violation("symmetry", f"{where}.edges", f"edge ({k}, {j}) has no reverse"))
                if m.size and np.max(np.abs(m)) > 1.0 + 1e-12:
                    out.append(Violation("range", f"{where}.edges", f"edge ({k}, {j}) leaves [-1, 1]"))
            out.extend(_zero_sum_violations(game, h, s, where, n_joint, rng))
    return out


def _zero_sum_violations(game, h, s, where, n_joint, rng):
    if n_joint <= ENUMERATION_LIMIT:
        total = game.reward_tensor(h, s).sum(axis=0)
        worst = float(np.max(np.abs(total)))
        if worst > ZERO_SUM_TOL:
            a = np.unravel_index(int(np.argmax(np.abs(total))), total.shape)
            return [Violation("zero-sum", where, f"rewards sum to {worst:.3g} at joint action {tuple(map(int, a))}")]
        return []
    st = game.state(h, s)
    out = []
    const_total = 0.0
    for (k, j), m in st.edges.items():
        if k > j or (j, k) not in st.edges:
            continue
        pair = m + st.edges[(j, k)].T
        if np.ptp(pair) > ZERO_SUM_TOL:
            out.append(Violation("zero-sum", where, f"pair ({k}, {j}) sum is not constant"))
        const_total += float(pair.flat[0])
    if abs(const_total) > ZERO_SUM_TOL:
        out.append(Violation("zero-sum", where, f"pair constants sum to {const_total:.3g}"))
    for _ in range(ZERO_SUM_SAMPLES):
        a = tuple(int(rng.integers(c)) for c in game.action_counts)
        tot = sum(reward(game, h, s, k, a) for k in range(game.n))
        if abs(tot) > ZERO_SUM_TOL:
            out.append(Violation("zero-sum", where, f"rewards sum to {tot:.3g} at joint action {a}"))
            break
    return out
