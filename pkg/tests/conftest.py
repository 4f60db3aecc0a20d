"""Shared chain fixtures: small lattices where every constant can be done by hand."""

import numpy as np
import pytest

import fpchain as fp


@pytest.fixture(scope="session")
def quad1d4():
    """4-cell chain for V = x^2/2 on [-1,1], h=0.5, finite-volume rates."""
    grid = fp.build_grid(1, 1.0, 0.5)
    return fp.fv_rates(grid, fp.Potential.quadratic(np.array([[1.0]])), 1.0)


@pytest.fixture(scope="session")
def quad1d8():
    grid = fp.build_grid(1, 1.0, 0.25)
    return fp.fv_rates(grid, fp.Potential.quadratic(np.array([[1.0]])), 1.0)


@pytest.fixture(scope="session")
def flat1d4():
    grid = fp.build_grid(1, 1.0, 0.5)
    return fp.fv_rates(grid, fp.Potential.zero(1), 1.0)


@pytest.fixture(scope="session")
def nonadd2d():
    """8x8 chain with mixing quadratic V = x'Mx/2, M = [[1,.2],[.2,1]]."""
    grid = fp.build_grid(2, 1.0, 0.25)
    M = np.array([[1.0, 0.2], [0.2, 1.0]])
    return fp.fv_rates(grid, fp.Potential.quadratic(M), 1.0)


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.Philox(key=20240817))


def dense_generator(table):
    """Independent dense build of the generator matrix L, row i = state i."""
    grid = table.grid
    nbr = fp.neighbor_table(grid)
    n = grid.n_states
    L = np.zeros((n, n))
    for i in range(n):
        for row in range(2 * grid.d):
            j = nbr[row, i]
            if j >= 0:
                L[i, j] += table.rates[row, i]
                L[i, i] -= table.rates[row, i]
    return L
