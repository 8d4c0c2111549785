import numpy as np
import pytest

from meshmend.geometry import CameraModel, RigidTransform, ScaledPlacement
from meshmend.mesh import TriangleMesh

CUBE_OBJ = b"""# unit cube
v -0.5 -0.5 -0.5
v -0.5 -0.5 0.5
v -0.5 0.5 -0.5
v -0.5 0.5 0.5
v 0.5 -0.5 -0.5
v 0.5 -0.5 0.5
v 0.5 0.5 -0.5
v 0.5 0.5 0.5
f 1 2 4
f 1 4 3
f 5 7 8
f 5 8 6
f 1 5 6
f 1 6 2
f 3 4 8
f 3 8 7
f 1 3 7
f 1 7 5
f 2 6 8
f 2 8 4
"""


def cube_mesh() -> TriangleMesh:
    v = np.array([[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)])
    f = np.array(
        [
            [0, 1, 3], [0, 3, 2],
            [4, 6, 7], [4, 7, 5],
            [0, 4, 5], [0, 5, 1],
            [2, 3, 7], [2, 7, 6],
            [0, 2, 6], [0, 6, 4],
            [1, 5, 7], [1, 7, 3],
        ],
        dtype=np.int32,
    )
    return TriangleMesh(v, f)


@pytest.fixture
def cube():
    return cube_mesh()


@pytest.fixture
def simple_camera():
    return CameraModel(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100)


@pytest.fixture
def cube_at_2m():
    return ScaledPlacement(RigidTransform(None, [0.0, 0.0, 2.0]), 1.0)
