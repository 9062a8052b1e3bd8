import numpy as np
import pytest

from inbore_kin.robot import default_robot
from inbore_kin.transmission import default_transmission
from inbore_kin import scenes


@pytest.fixture(scope="session")
def model():
    """Default robot in its own base frame."""
    return default_robot()


@pytest.fixture(scope="session")
def transmission():
    return default_transmission()


@pytest.fixture(scope="session")
def scene():
    """Default male sigma-0 scanner scene with the robot mounted."""
    return scenes.default_scene()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_configs(model, rng, n, margin=0.05):
    lim = model.limits_array()
    span = lim[:, 1] - lim[:, 0]
    lo = lim[:, 0] + margin * span
    hi = lim[:, 1] - margin * span
    return rng.uniform(lo, hi, (n, model.n_joints))
