import os

# File logs off and plain console output for the test run, before settings load.
os.environ.setdefault("LOG_DIR", "")
os.environ.setdefault("NO_COLOR", "1")

import numpy as np
import pytest

from app.body import build_human, pose_human, seated_theta
from app.fixtures import fixture_robot, seated_context, seated_world
from app.robot import load_robot
from app.schemas import RootPose
from app.settings import ASSETS_DIR


@pytest.fixture(scope="session")
def template_human():
    return build_human(np.zeros(10))


@pytest.fixture(scope="session")
def seated_human(template_human):
    return pose_human(template_human, seated_theta(), RootPose(position=(0.0, 0.0, 0.7)))


@pytest.fixture(scope="session")
def stretch():
    return fixture_robot()


@pytest.fixture(scope="session")
def planar_2r():
    return load_robot(str(ASSETS_DIR / "robots" / "planar_2r.robot"))


@pytest.fixture(scope="session")
def world():
    """The seated world with the robot exactly where the placement program puts it."""
    return seated_world()


@pytest.fixture(scope="session")
def ctx():
    return seated_context()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
