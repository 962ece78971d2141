import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from CGOScripts.cgo import SolverConfig  # noqa: E402
from CGOScripts.spectral import Field, TorusGrid  # noqa: E402
from CGOScripts.subspaces import BoxConstraint, Partition, SubspaceSpec, build_basis  # noqa: E402


@pytest.fixture(scope="session")
def grid8():
    return TorusGrid(d=3, n=8)


@pytest.fixture(scope="session")
def piecewise8(grid8):
    """Uniform dyadic partition with 8 cells."""
    return build_basis(SubspaceSpec("piecewise", 3, partition=Partition.dyadic(3, 8)), grid8)


@pytest.fixture(scope="session")
def split2(grid8):
    """Unit cube split in half along axis 1."""
    return build_basis(SubspaceSpec("piecewise", 3, partition=Partition.dyadic(3, 2)), grid8)


@pytest.fixture(scope="session")
def bandlimited1(grid8):
    return build_basis(SubspaceSpec("bandlimited", 3, B=1), grid8)


@pytest.fixture(scope="session")
def box5():
    return BoxConstraint(5.0)


@pytest.fixture(scope="session")
def solver8(grid8):
    return SolverConfig(grid8, method="krylov", tol=1e-10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(grid, rng, real=False):
    values = rng.standard_normal(grid.shape)
    if not real:
        values = values + 1j * rng.standard_normal(grid.shape)
    return Field(grid, values)


def low_mode_field(grid, rng, bandwidth=2, sup=0.5):
    """Random complex field supported on modes with ||m||_inf <= bandwidth, scaled to a given sup-norm."""
    wavenumbers = np.stack(np.broadcast_arrays(*grid.wavenumbers()))
    low = np.all(np.abs(wavenumbers) <= bandwidth, axis=0)
    coefficients = np.where(low, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape), 0.0)
    values = np.fft.ifftn(coefficients)
    return Field(grid, values * (sup / np.max(np.abs(values))))
