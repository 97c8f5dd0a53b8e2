"""Shared constructors for test states."""

import numpy as np

from kjblab.field import GridSpec, ScalarField
from kjblab.geometry import TwistData
from kjblab.sampling import random_potential, random_twist_potential


def negative_twist(grid: GridSpec, rng, beta: float = 0.3, fraction: float = 0.5) -> TwistData:
    chi0 = -np.eye(grid.n)
    return TwistData(chi0, random_twist_potential(grid, rng, chi0, fraction), beta)


def cosine(grid: GridSpec, eps: float) -> ScalarField:
    return ScalarField.from_function(grid, lambda x, *rest: eps * np.cos(2 * np.pi * x))


def random_state_phi(grid: GridSpec, rng, amplitude: float = 0.5) -> ScalarField:
    return random_potential(grid, rng, amplitude)
