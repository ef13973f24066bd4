import numpy as np
import pytest

from lapdeform.mesh import build_handle_map, farthest_point_sample
from lapdeform.shapes import grid, icosphere, tetrahedron, unit_square


@pytest.fixture(scope="session")
def tetra():
    return tetrahedron()


@pytest.fixture(scope="session")
def square():
    return unit_square()


@pytest.fixture(scope="session")
def ico162():
    return icosphere(2)


@pytest.fixture(scope="session")
def ico642():
    return icosphere(3)


@pytest.fixture(scope="session")
def bumpy_grid():
    rng = np.random.default_rng(7)
    return grid(4, 5, z=0.2 * rng.standard_normal(20))


@pytest.fixture(scope="session")
def ico_system():
    from lapdeform.deform import build_system

    mesh = icosphere(2)
    seeds = farthest_point_sample(mesh, 8)
    handles = build_handle_map(mesh, seeds)
    return build_system(mesh, handles)
