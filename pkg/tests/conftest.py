"""
Shared systems, kernels and barriers.

Kernel assembly and barrier iteration dominate test time, so the objects several
test files need are built once per session.
"""

import pytest

from wkam.fixtures import adapted_fixture
from wkam.minplus import assemble_kernel
from wkam.systems import free, pendulum
from wkam.torus import TorusGrid
from wkam.weakkam import critical_value, peierls_barrier, solve_weak_kam

N = 128


@pytest.fixture(scope="session")
def grid():
    return TorusGrid(1, N)


@pytest.fixture(scope="session")
def free_spec():
    return free()


@pytest.fixture(scope="session")
def pendulum_spec():
    return pendulum()


@pytest.fixture(scope="session")
def adapted_spec():
    return adapted_fixture()


@pytest.fixture(scope="session")
def pendulum_kernel(pendulum_spec, grid):
    return assemble_kernel(pendulum_spec, grid, 0.5)


@pytest.fixture(scope="session")
def pendulum_c(pendulum_kernel, pendulum_spec):
    c, _ = critical_value(pendulum_kernel, pendulum_spec)
    return c


@pytest.fixture(scope="session")
def pendulum_solution(pendulum_kernel, pendulum_c):
    return solve_weak_kam(pendulum_kernel, pendulum_c)


@pytest.fixture(scope="session")
def pendulum_barrier(pendulum_kernel, pendulum_c):
    return peierls_barrier(pendulum_kernel, pendulum_c)


@pytest.fixture(scope="session")
def adapted_kernel(adapted_spec, grid):
    return assemble_kernel(adapted_spec, grid, 0.5)


@pytest.fixture(scope="session")
def adapted_c(adapted_kernel, adapted_spec):
    c, _ = critical_value(adapted_kernel, adapted_spec)
    return c


@pytest.fixture(scope="session")
def adapted_solution(adapted_kernel, adapted_c):
    return solve_weak_kam(adapted_kernel, adapted_c)


@pytest.fixture(scope="session")
def slow_free_barrier(free_spec, grid):
    """Substep 0.5 keeps the one-cell kinetic cost dist/(2 n tau) under 4e-3."""
    K = assemble_kernel(free_spec, grid, 1.0, m=2)
    return peierls_barrier(K, 0.0)


@pytest.fixture(scope="session")
def slow_adapted_barrier(adapted_spec, grid):
    K = assemble_kernel(adapted_spec, grid, 1.0, m=2)
    c, _ = critical_value(K)
    return peierls_barrier(K, c)
