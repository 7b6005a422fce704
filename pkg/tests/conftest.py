import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pmg.game import Finite, MarkovGame, StateInteraction
from pmg.generate import GeneratorConfig, generate

settings.register_profile(
    "pmg", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("pmg")


def matching_pennies(steps: int = 1) -> MarkovGame:
    m = np.array([[1.0, -1.0], [-1.0, 1.0]])
    st = StateInteraction({(0, 1): m, (1, 0): -m.T}, (0,), np.ones((2, 1)))
    return MarkovGame((2, 2), tuple((st,) for _ in range(steps)), np.ones(1), Finite(steps))


@pytest.fixture
def pennies():
    return matching_pennies()


@pytest.fixture
def small_game():
    return generate(GeneratorConfig(n=3, num_states=2, steps=2, action_counts=(2, 2, 2), seed=11))


@pytest.fixture
def small_discounted():
    return generate(GeneratorConfig(n=3, num_states=2, steps=None, gamma=0.5, action_counts=(2, 2, 2), seed=5))
