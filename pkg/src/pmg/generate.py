"""Random zero-sum polymatrix Markov games."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pmg.game import Discounted, Finite, MarkovGame, StateInteraction


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 3
    num_states: int = 3
    steps: int | None = 3
    gamma: float | None = None
    action_counts: tuple[int, ...] | None = None
    density: float = 1.0
    seed: int = 0
    # "single": one random controller per state (switching control);
    # "all": every player drives the transition (only used for two-player games)
    control: str = "single"
    time_homogeneous: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two players")
        if (self.steps is None) == (self.gamma is None):
            raise ValueError("give exactly one of steps (finite) or gamma (discounted)")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must lie in [0, 1]")
        if self.control not in ("single", "all"):
            raise ValueError(f"unknown control mode {self.control!r}")
        if self.action_counts is not None and len(self.action_counts) != self.n:
            raise ValueError("action_counts needs one entry per player")


def _random_rows(rng: np.random.Generator, shape: tuple[int, ...], S: int) -> np.ndarray:
    raw = rng.uniform(1e-3, 1.0, size=shape + (S,))
    return raw / raw.sum(axis=-1, keepdims=True)


def generate(config: GeneratorConfig) -> MarkovGame:
    """Draw a game whose edge pairs are zero-sum: ``r_jk = -r_kj^T``.

    Every state gets its own controller and its own edge set (each unordered
    pair present with probability ``density``).
    """
    rng = np.random.default_rng(config.seed)
    n, S = config.n, config.num_states
    counts = config.action_counts or (3,) * n
    horizon = Finite(config.steps) if config.steps is not None else Discounted(config.gamma)
    num_layers = config.steps if config.steps is not None else 1

    def layer():
        states = []
        for _ in range(S):
            edges = {}
            for k in range(n):
                for j in range(k + 1, n):
                    if rng.random() < config.density:
                        m = rng.uniform(-1.0, 1.0, size=(counts[k], counts[j]))
                        edges[(k, j)] = m
                        edges[(j, k)] = -m.T
            if config.control == "single":
                c = (int(rng.integers(n)),)
            else:
                c = tuple(range(n))
            trans = _random_rows(rng, tuple(counts[i] for i in c), S)
            states.append(StateInteraction(edges, c, trans))
        return tuple(states)

    if config.time_homogeneous:
        one = layer()
        layers = tuple(one for _ in range(num_layers))
    else:
        layers = tuple(layer() for _ in range(num_layers))
    rho = rng.uniform(1e-3, 1.0, size=S)
    return MarkovGame(counts, layers, rho / rho.sum(), horizon)


def random_config(seed: int, max_players: int = 4, max_states: int = 5, max_steps: int = 5, max_actions: int = 3) -> GeneratorConfig:
    """A random small configuration within the given bounds (used for benchmark sweeps)."""
    rng = np.random.default_rng([seed, 12345])
    n = int(rng.integers(2, max_players + 1))
    return GeneratorConfig(
        n=n,
        num_states=int(rng.integers(1, max_states + 1)),
        steps=int(rng.integers(1, max_steps + 1)),
        action_counts=tuple(int(a) for a in rng.integers(1, max_actions + 1, size=n)),
        density=float(rng.choice([0.5, 1.0])),
        seed=seed,
    )
