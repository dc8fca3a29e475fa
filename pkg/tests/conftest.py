"""Shared fixtures for the bohmflow test suite."""

import numpy as np
import pytest

from src.field_core import Boundary, ComplexField, ParticleSystem, SpatialGrid
from src.scenarios import gaussian_packet


@pytest.fixture
def line_grid():
    """Periodic line [-20, 20) with 256 points."""
    return SpatialGrid(points=(256,), lower=(-20.0,), upper=(20.0,), boundary=Boundary.PERIODIC)


@pytest.fixture
def box_grid():
    """Hard-wall line [-10, 10] with 401 points."""
    return SpatialGrid(points=(401,), lower=(-10.0,), upper=(10.0,), boundary=Boundary.DIRICHLET)


@pytest.fixture
def free_particle():
    return ParticleSystem(masses=(1.0,), dims=(1,))


@pytest.fixture
def oscillator():
    return ParticleSystem(masses=(1.0,), dims=(1,), potential=lambda coords, t: 0.5 * coords[0] ** 2)


@pytest.fixture
def gaussian(line_grid):
    """Unit-width packet at the origin moving with k0 = 1."""
    values = gaussian_packet(line_grid.axis(0), sigma=1.0, k0=1.0)
    return ComplexField(grid=line_grid, values=values)


@pytest.fixture
def ho_ground(line_grid):
    x = line_grid.axis(0)
    return ComplexField(grid=line_grid, values=np.pi ** -0.25 * np.exp(-0.5 * x ** 2))
