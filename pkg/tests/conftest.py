import numpy as np
import pytest

import ks_finite._kscore as kscore

from .util import rotated_frames_set


@pytest.fixture()
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def peres():
    return kscore.peres_set()


@pytest.fixture(scope="session")
def peres_completed():
    return kscore.peres_set(complete=True)


@pytest.fixture(scope="session")
def axes():
    return kscore.make_ks_set("axes", [(1, 0, 0), (0, 1, 0), (0, 0, 1)])


@pytest.fixture(scope="session")
def three_frames():
    """Three triads sharing the z axis"""
    return rotated_frames_set("three-frames", [0, 30, 60])
