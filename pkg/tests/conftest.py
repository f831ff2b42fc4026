"""Shared fixtures: one small interaction reused across module tests."""

import numpy as np
import pytest

import spdckit as sk


@pytest.fixture(scope="session")
def small_grid():
    return sk.make_grid(32, 32, 2.5e-6, 2.5e-6)


@pytest.fixture(scope="session")
def thin_spec():
    return sk.InteractionSpec.collinear(
        405e-9, 1.69, L=1e-3, n_z=4, chi2_magnitude=1e-6, n_realizations=200, seed=9)


@pytest.fixture(scope="session")
def lg_basis(small_grid):
    return sk.ModeBasis.lg(range(-1, 2), [0], 10e-6, small_grid)


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Random full-rank density matrix for metric tests."""
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_pure_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)
