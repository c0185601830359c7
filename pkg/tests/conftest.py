import numpy as np
import pytest

import mmreach as mm


@pytest.fixture(scope="session")
def bilinear():
    return mm.preset_system("bilinear")


@pytest.fixture(scope="session")
def cubic():
    return mm.preset_system("cubic")


@pytest.fixture(scope="session")
def trig():
    return mm.preset_system("trig")


@pytest.fixture(scope="session")
def skew_shape():
    # shape matrix of the shipped example1 preset, det = 3
    return np.array([[1.0, -2.0], [1.0, 1.0]])


@pytest.fixture(scope="session")
def example1_ptope(skew_shape):
    return mm.Parallelotope(skew_shape, mm.Box([0.0, -0.25], [0.25, 0.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
