import numpy as np
import pytest

from nlskam import HamParams


@pytest.fixture
def params():
    return HamParams(d=1, sigma=2.5, r=1.0, floor_const=1024.0,
                     degree_cap=16, mode_radius=2)


@pytest.fixture
def params2d():
    return HamParams(d=2, sigma=2.5, r=1.0, floor_const=1024.0,
                     degree_cap=16, mode_radius=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
