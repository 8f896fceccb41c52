import numpy as np
import pytest

from cellshape.fem import MaterialTable, assemble_elasticity, solve_direct
from cellshape.mesh import generate_composite_domain


@pytest.fixture(scope="session")
def small_hierarchy():
    """1 x 2 inclusions, two refinements (409 vertices on the finest level)."""
    return generate_composite_domain(1, 2, 0.3, 2)


@pytest.fixture(scope="session")
def small_mesh(small_hierarchy):
    return small_hierarchy.finest


@pytest.fixture(scope="session")
def medium_hierarchy():
    """2 x 2 inclusions, two refinements."""
    return generate_composite_domain(2, 2, 0.3, 2)


@pytest.fixture(scope="session")
def small_state(small_mesh):
    mat = MaterialTable.graded(1)
    u = solve_direct(assemble_elasticity(small_mesh, mat, 0.1)).reshape(-1, 2)
    return mat, u


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
