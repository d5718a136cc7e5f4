from pathlib import Path

import numpy as np
import pytest

from dmab.arms import IidArm, markov_grid_chains

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"

TWO_USER_MEANS = [[0.8, 0.6], [0.6, 0.35]]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_user_means():
    return np.array(TWO_USER_MEANS)


@pytest.fixture
def two_user_arms():
    return [[IidArm.bernoulli(p) for p in row] for row in TWO_USER_MEANS]


@pytest.fixture
def chains():
    return markov_grid_chains()


@pytest.fixture
def configs_dir():
    return CONFIGS
