import numpy as np
import pytest

from r2p.data import HteDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_hte(n1: int, n0: int, d: int = 1, seed: int = 0) -> HteDataset:
    r = np.random.default_rng(seed)
    t = np.array([1] * n1 + [0] * n0)
    x = r.normal(size=(n1 + n0, d))
    return HteDataset(x, t, r.normal(size=n1 + n0))
