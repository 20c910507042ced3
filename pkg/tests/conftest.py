import numpy as np
import pytest

from mvsense.geometry import Intrinsics, RigidTransform
from mvsense.geometry import rot_x, rot_y, rot_z


@pytest.fixture
def k_vga():
    return Intrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rigid(rng) -> RigidTransform:
    """Random proper rigid transform from three Euler angles."""
    a, b, c = rng.uniform(-np.pi, np.pi, 3)
    r = rot_z(a) @ rot_y(b) @ rot_x(c)
    t = rng.uniform(-2.0, 2.0, 3)
    return RigidTransform(r, t)
