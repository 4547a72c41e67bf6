import numpy as np
import pytest

from conetrade.trading import QuadraticUtility


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_nsd_utility(rng, n):
    """Random concave quadratic in the benchmark family."""
    M = rng.random((n, n))
    return QuadraticUtility(-M @ M.T, rng.integers(1, 201, size=n).astype(float))
