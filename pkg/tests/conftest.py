import numpy as np
import pytest

from datamkt import make_random_independent, make_random_joint, make_random_symmetric


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_profile(rng, n, k):
    return tuple(int(m) for m in rng.integers(0, 1 << k, size=n))


@pytest.fixture
def small_independent():
    return make_random_independent(3, 2, seed=42, alpha=0.5)


@pytest.fixture
def small_joint():
    return make_random_joint(3, 2, seed=43, alpha=0.5)


@pytest.fixture
def small_symmetric():
    return make_random_symmetric(3, 2, seed=44)
