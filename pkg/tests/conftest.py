import numpy as np
import pytest

from flimkit.decay import TimeGrid


@pytest.fixture
def grid():
    return TimeGrid(256, 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
