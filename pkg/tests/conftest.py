from __future__ import annotations

import numpy as np
import pytest

from ldi4d.camera import CameraIntrinsics, CameraPose
from ldi4d.synthetic import SyntheticConfig, generate_scene


@pytest.fixture(scope="session")
def small_scene():
    """Planes scene small enough for fast per-test renders."""
    return generate_scene("planes", seed=3, config=SyntheticConfig(width=96, height=96, margin=24))


@pytest.fixture(scope="session")
def small_cloud(small_scene):
    return small_scene.lift()


@pytest.fixture
def toy_intrinsics():
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=32.0, width=64, height=64)


@pytest.fixture
def identity_pose():
    return CameraPose.identity()


def make_rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
