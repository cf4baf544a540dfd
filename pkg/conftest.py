"""Shared fixtures: charts, small meshes and the straight patch-test setup."""

import os

import numpy as np
import pytest

from curvedhz.assembly import MaterialLaw
from curvedhz.curving import build_curved_mesh, build_exact_map
from curvedhz.geometry import make_builtin_chart
from curvedhz.mesh import generate_disk_mesh, read_gmsh, unit_square_mesh
from curvedhz.verify import make_manufactured

ROOT = os.path.dirname(os.path.abspath(__file__))


@pytest.fixture(scope="session")
def circle():
    return make_builtin_chart("circle")


@pytest.fixture(scope="session")
def three_leaf():
    return make_builtin_chart("three_leaf")


@pytest.fixture(scope="session")
def three_leaf_mesh(three_leaf):
    """Checked-in graded starting mesh, 90 triangles."""
    with open(os.path.join(ROOT, "meshes", "three_leaf_0.msh"), "rb") as f:
        return read_gmsh(f.read(), three_leaf)


@pytest.fixture(scope="session")
def square():
    return unit_square_mesh(1)


@pytest.fixture(scope="session")
def square4():
    return unit_square_mesh(4)


@pytest.fixture(scope="session")
def disk(circle):
    """25 triangles."""
    return generate_disk_mesh(circle, 0.5)


@pytest.fixture(scope="session")
def curved_disk(disk, circle):
    cm = build_curved_mesh(disk, circle, 2)
    return cm, build_exact_map(cm, circle)


@pytest.fixture(scope="session")
def patch_solution():
    return make_manufactured("linear_patch", MaterialLaw(1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
