import numpy as np
import pytest

from faceproj import config


@pytest.fixture(scope="session")
def default_cfg():
    return config.load_scenario("")


@pytest.fixture(scope="session")
def face_model(default_cfg):
    return default_cfg.face


@pytest.fixture(scope="session")
def camera(default_cfg):
    return default_cfg.camera


def random_rotation(rng):
    # uniform-ish rotation from a random rotvec; fine for property tests
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    from faceproj import geometry
    return geometry.rotation_from_rotvec(axis * rng.uniform(0.0, np.pi))
