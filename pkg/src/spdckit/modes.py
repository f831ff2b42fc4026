"""Laguerre-Gauss and Hermite-Gauss transverse mode bases.

Modes are evaluated at their waist plane (no curvature or Gouy terms);
all propagation is the solver's job. The LG azimuthal convention is
``exp(+i l phi)`` with ``phi = atan2(y, x)`` — coincidence-matrix
orientation depends on it, so it is fixed here once.

Profile evaluation is written in jax.numpy with static mode orders, so a
waist passed in as a traced value stays differentiable; concrete-waist
fields are cached per (index, waist, grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import jax.numpy as jnp
import numpy as np

from .errors import ConfigError, GridMismatchError
from .grids import ComplexField, TransverseGrid, inner_product

LG = "LG"
HG = "HG"

#: discrete-norm deficit beyond which a mode is considered truncated by the window
TRUNCATION_TOL = 1e-3


@dataclass(frozen=True)
class ModeIndex:
    """Index of one transverse mode: LG carries (l, p), HG carries (nx, ny)."""

    family: str
    l: int = 0
    p: int = 0
    nx: int = 0
    ny: int = 0

    def __post_init__(self):
        if self.family not in (LG, HG):
            raise ConfigError(f"unknown mode family {self.family!r}; expected 'LG' or 'HG'")
        if self.family == LG and self.p < 0:
            raise ConfigError(f"LG radial index must be >= 0, got p={self.p}")
        if self.family == HG and (self.nx < 0 or self.ny < 0):
            raise ConfigError(f"HG indices must be >= 0, got ({self.nx}, {self.ny})")

    @classmethod
    def lg(cls, l: int, p: int = 0) -> "ModeIndex":
        return cls(family=LG, l=l, p=p)

    @classmethod
    def hg(cls, nx: int, ny: int = 0) -> "ModeIndex":
        return cls(family=HG, nx=nx, ny=ny)

    @property
    def label(self) -> str:
        if self.family == LG:
            return f"LG(l={self.l:+d},p={self.p})"
        return f"HG({self.nx},{self.ny})"

    def sort_key(self):
        if self.family == LG:
            return (0, self.l, self.p)
        return (1, self.nx, self.ny)


def _hermite(n: int, x):
    """Physicists' Hermite polynomial H_n, n static."""
    if n == 0:
        return jnp.ones_like(x)
    h_prev, h = jnp.ones_like(x), 2.0 * x
    for k in range(1, n):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h

def _laguerre(p: int, alpha: int, x):
    """Generalized Laguerre polynomial L_p^alpha, p and alpha static."""
    if p == 0:
        return jnp.ones_like(x)
    l_prev, l = jnp.ones_like(x), 1.0 + alpha - x
    for k in range(1, p):
        l_prev, l = l, ((2 * k + 1 + alpha - x) * l - (k + alpha) * l_prev) / (k + 1)
    return l


def lg_profile(l: int, p: int, waist, grid: TransverseGrid) -> jnp.ndarray:
    """Continuum-normalized LG amplitude at the waist plane (differentiable in waist)."""
    X, Y = grid.xy_mesh
    r2 = X**2 + Y**2
    phi = np.arctan2(Y, X)
    al = abs(l)
    norm = math.sqrt(2.0 * math.factorial(p) / (math.pi * math.factorial(p + al)))
    rho = 2.0 * r2 / waist**2
    # (sqrt(2) r / w)^|l| written with the waist factored out keeps the
    # derivative w.r.t. the waist finite at the r = 0 grid point
    ring = np.sqrt(2.0 * r2) ** al / waist ** al
    radial = (norm / waist) * ring * _laguerre(p, al, rho) * jnp.exp(-r2 / waist**2)
    return radial * jnp.exp(1j * l * phi)


def hg_profile(nx: int, ny: int, waist, grid: TransverseGrid) -> jnp.ndarray:
    """Continuum-normalized HG amplitude at the waist plane (differentiable in waist)."""
    X, Y = grid.xy_mesh
    cx = (2.0 / math.pi) ** 0.25 / math.sqrt(2.0**nx * math.factorial(nx))
    cy = (2.0 / math.pi) ** 0.25 / math.sqrt(2.0**ny * math.factorial(ny))
    u = (cx / jnp.sqrt(waist)) * _hermite(nx, jnp.sqrt(2.0) * X / waist) * jnp.exp(-X**2 / waist**2)
    v = (cy / jnp.sqrt(waist)) * _hermite(ny, jnp.sqrt(2.0) * Y / waist) * jnp.exp(-Y**2 / waist**2)
    return (u * v).astype(jnp.complex128)


def mode_profile(idx: ModeIndex, waist, grid: TransverseGrid) -> jnp.ndarray:
    if idx.family == LG:
        return lg_profile(idx.l, idx.p, waist, grid)
    return hg_profile(idx.nx, idx.ny, waist, grid)


@lru_cache(maxsize=4096)
def _cached_mode(idx: ModeIndex, waist: float, grid: TransverseGrid) -> ComplexField:
    amp = np.asarray(mode_profile(idx, waist, grid))
    norm2 = float(np.sum(np.abs(amp) ** 2) * grid.cell_area)
    if abs(norm2 - 1.0) > TRUNCATION_TOL:
        raise ConfigError(
            f"{idx.label} with waist {waist:g} is truncated by the grid window "
            f"(discrete norm^2 = {norm2:.6f}); enlarge the window or shrink the waist"
        )
    return ComplexField(grid, amp / np.sqrt(norm2))


def mode_field(idx: ModeIndex, waist: float, grid: TransverseGrid) -> ComplexField:
    """Unit-discrete-norm mode field, cached per (index, waist, grid)."""
    return _cached_mode(idx, float(waist), grid)


def lg_mode(idx: ModeIndex, waist: float, grid: TransverseGrid) -> ComplexField:
    if idx.family != LG:
        raise ConfigError(f"lg_mode called with {idx.label}")
    return mode_field(idx, waist, grid)


def hg_mode(idx: ModeIndex, waist: float, grid: TransverseGrid) -> ComplexField:
    if idx.family != HG:
        raise ConfigError(f"hg_mode called with {idx.label}")
    return mode_field(idx, waist, grid)


@dataclass(frozen=True)
class ModeBasis:
    """An ordered, discretely orthonormal set of modes sharing one grid.

    Ordering is canonical — LG by (l ascending, p ascending), HG by
    (nx, ny) lexicographic, LG before HG — because it defines the row and
    column layout of every correlation matrix downstream.
    """

    indices: tuple[ModeIndex, ...]
    waists: tuple[float, ...]
    grid: TransverseGrid
    _stack: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.indices) != len(self.waists):
            raise ConfigError("one waist per mode index is required")
        if len(set(self.indices)) != len(self.indices):
            raise ConfigError("mode indices must be unique")
        order = sorted(range(len(self.indices)), key=lambda i: self.indices[i].sort_key())
        object.__setattr__(self, "indices", tuple(self.indices[i] for i in order))
        object.__setattr__(self, "waists", tuple(float(self.waists[i]) for i in order))
        fields = [mode_field(idx, w, self.grid) for idx, w in zip(self.indices, self.waists)]
        stack = np.stack([np.asarray(f.amplitude) for f in fields])
        object.__setattr__(self, "_stack", stack)
        gram = self.gram()
        resid = np.max(np.abs(gram - np.eye(len(self.indices))))
        if resid > 1e-6:
            raise ConfigError(
                f"mode basis is not orthonormal on this grid (max Gram residual {resid:.2e}); "
                "refine the grid or reduce waists/orders"
            )

    @classmethod
    def lg(cls, l_values, p_values, waist: float, grid: TransverseGrid) -> "ModeBasis":
        idx = tuple(ModeIndex.lg(l, p) for l in l_values for p in p_values)
        return cls(indices=idx, waists=(waist,) * len(idx), grid=grid)

    @classmethod
    def hg(cls, nx_values, ny_values, waist: float, grid: TransverseGrid) -> "ModeBasis":
        idx = tuple(ModeIndex.hg(nx, ny) for nx in nx_values for ny in ny_values)
        return cls(indices=idx, waists=(waist,) * len(idx), grid=grid)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(idx.label for idx in self.indices)

    def stack(self) -> np.ndarray:
        """(n_modes, nx, ny) array of mode amplitudes in basis order."""
        return self._stack

    def gram(self) -> np.ndarray:
        m = self._stack.reshape(len(self.indices), -1)
        return (np.conj(m) @ m.T) * self.grid.cell_area

    def position(self, idx: ModeIndex) -> int:
        return self.indices.index(idx)

    def mode(self, k: int) -> ComplexField:
        return ComplexField(self.grid, self._stack[k])

    def l_values(self) -> np.ndarray:
        """Azimuthal number per slot (HG modes raise)."""
        if any(idx.family != LG for idx in self.indices):
            raise ConfigError("l_values only defined for pure LG bases")
        return np.array([idx.l for idx in self.indices])


def decompose(field_: ComplexField, basis: ModeBasis) -> np.ndarray:
    """Coefficients <mode_k, field> of a field over a basis."""
    if field_.grid != basis.grid:
        raise GridMismatchError("field and basis live on different grids")
    flat = np.asarray(field_.amplitude).reshape(-1)
    m = basis.stack().reshape(len(basis), -1)
    return (np.conj(m) @ flat) * basis.grid.cell_area


def project_stack(stacks: jnp.ndarray, basis: ModeBasis) -> jnp.ndarray:
    """Project (..., nx, ny) field stacks onto a basis -> (..., n_modes).

    jit-friendly; used for whole vacuum ensembles at once.
    """
    m = jnp.asarray(basis.stack().reshape(len(basis), -1))
    flat = stacks.reshape(stacks.shape[:-2] + (-1,))
    return flat @ jnp.conj(m).T * basis.grid.cell_area


def synthesize(coeffs, basis: ModeBasis) -> ComplexField:
    """Weighted superposition of basis modes (inverse of decompose on the span)."""
    c = jnp.asarray(coeffs, dtype=jnp.complex128)
    if c.shape != (len(basis),):
        raise GridMismatchError(f"expected {len(basis)} coefficients, got {c.shape}")
    amp = jnp.tensordot(c, jnp.asarray(basis.stack()), axes=1)
    return ComplexField(basis.grid, amp)
