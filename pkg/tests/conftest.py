import numpy as np
import pytest

from topovar._alloc import tune_allocator

tune_allocator()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, size=()):
    """Well-conditioned random SPD matrices."""
    a = rng.normal(size=size + (n, n))
    return np.eye(n) * n + 0.5 * (a @ np.swapaxes(a, -1, -2)) / n
