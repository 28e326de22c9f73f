import numpy as np
import pytest

from dcopde.problem import Individual


def make_ind(f=0.0, phi=0.0, x=(0.0, 0.0), t=0):
    """Individual with given objective and violation; feasibility follows phi."""
    return Individual(np.asarray(x, dtype=float), float(f), float(phi), phi == 0.0, t, (float(phi),))


@pytest.fixture
def ind():
    return make_ind


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
