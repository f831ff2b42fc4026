"""Pump envelope and spatially structured nonlinearity from learnable parameters.

Both objects are modal expansions: a complex coefficient and a waist per
basis function. The crystal may additionally be segmented along the
propagation axis (piecewise-constant segments of equal length, segment
count dividing the step count) and carries an optional periodic poling
carrier. ``crystal_coeffs = None`` denotes an unstructured (transversely
uniform) crystal.

Scale conventions: the pump is power-normalized to 1 after superposition,
and the crystal is scaled so its peak |chi| equals the interaction's
``chi2_magnitude`` — the one knob that sets the parametric gain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import jax
import jax.numpy as jnp
import numpy as np

from .errors import ConfigError, DegenerateInputError
from .grids import ComplexField, TransverseGrid
from .interaction import InteractionSpec, TWO_PI
from .modes import ModeBasis, mode_profile


@dataclass(frozen=True)
class CrystalSlice:
    """Transverse nonlinearity profile at one propagation step."""

    profile: ComplexField
    zeta: float


@dataclass(frozen=True)
class ParamSet:
    """Learnable coefficients and waists for the pump and crystal expansions.

    ``crystal_coeffs`` has shape (n_segments, n_modes); its mask matches.
    Complex coefficients are flattened to (re, im) scalar pairs sharing
    their mask entry; waists are optimized through their logarithm so they
    stay positive (see :meth:`flatten`).
    """

    pump_coeffs: np.ndarray
    pump_waists: np.ndarray
    crystal_coeffs: np.ndarray | None = None
    crystal_waists: np.ndarray | None = None
    learn_pump_coeffs: np.ndarray | None = None
    learn_pump_waists: np.ndarray | None = None
    learn_crystal_coeffs: np.ndarray | None = None
    learn_crystal_waists: np.ndarray | None = None
    pump_labels: tuple[str, ...] | None = None
    crystal_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        pc = np.asarray(self.pump_coeffs, dtype=np.complex128)
        pw = np.asarray(self.pump_waists, dtype=np.float64)
        if pc.ndim != 1 or pw.shape != pc.shape:
            raise ConfigError("pump coefficients and waists must be 1-D and equal length")
        if np.any(pw <= 0):
            raise ConfigError("pump waists must be positive")
        object.__setattr__(self, "pump_coeffs", pc)
        object.__setattr__(self, "pump_waists", pw)

        if self.crystal_coeffs is not None:
            cc = np.atleast_2d(np.asarray(self.crystal_coeffs, dtype=np.complex128))
            cw = np.asarray(self.crystal_waists, dtype=np.float64)
            if cw.shape != (cc.shape[1],):
                raise ConfigError("need one crystal waist per transverse crystal mode")
            if np.any(cw <= 0):
                raise ConfigError("crystal waists must be positive")
            object.__setattr__(self, "crystal_coeffs", cc)
            object.__setattr__(self, "crystal_waists", cw)
        elif self.crystal_waists is not None:
            raise ConfigError("crystal waists given without crystal coefficients")

        for name, ref in (("learn_pump_coeffs", self.pump_coeffs),
                          ("learn_pump_waists", self.pump_waists),
                          ("learn_crystal_coeffs", self.crystal_coeffs),
                          ("learn_crystal_waists", self.crystal_waists)):
            mask = getattr(self, name)
            if mask is None:
                if ref is None:
                    continue
                mask = np.zeros(ref.shape, dtype=bool)
            else:
                if ref is None:
                    raise ConfigError(f"{name} given but the parameters are absent")
                mask = np.asarray(mask, dtype=bool)
                if mask.shape != ref.shape:
                    raise ConfigError(f"{name} shape {mask.shape} != parameter shape {ref.shape}")
            object.__setattr__(self, name, mask)

    @property
    def n_segments(self) -> int:
        return 1 if self.crystal_coeffs is None else self.crystal_coeffs.shape[0]

    def n_learnable(self) -> int:
        return len(self.flatten()[0])

    def flatten(self) -> tuple[np.ndarray, list[str]]:
        """Vector of learnable real scalars plus one name per entry.

        Layout: pump coeff (re, im) pairs, log pump waists, crystal coeff
        (re, im) pairs, log crystal waists — each restricted to its mask.
        """
        vec: list[float] = []
        names: list[str] = []
        for j in np.flatnonzero(self.learn_pump_coeffs):
            vec += [self.pump_coeffs[j].real, self.pump_coeffs[j].imag]
            names += [f"pump_coeff[{j}].re", f"pump_coeff[{j}].im"]
        for j in np.flatnonzero(self.learn_pump_waists):
            vec.append(np.log(self.pump_waists[j]))
            names.append(f"log_pump_waist[{j}]")
        if self.crystal_coeffs is not None:
            for s, j in zip(*np.nonzero(self.learn_crystal_coeffs)):
                vec += [self.crystal_coeffs[s, j].real, self.crystal_coeffs[s, j].imag]
                names += [f"crystal_coeff[{s},{j}].re", f"crystal_coeff[{s},{j}].im"]
            for j in np.flatnonzero(self.learn_crystal_waists):
                vec.append(np.log(self.crystal_waists[j]))
                names.append(f"log_crystal_waist[{j}]")
        return np.asarray(vec, dtype=np.float64), names

    def unflatten(self, vector) -> dict[str, jnp.ndarray]:
        """Rebuild full (traced-friendly) parameter arrays from a free vector."""
        v = jnp.asarray(vector, dtype=jnp.float64)
        pos = 0
        pc = jnp.asarray(self.pump_coeffs)
        for j in np.flatnonzero(self.learn_pump_coeffs):
            pc = pc.at[j].set(v[pos] + 1j * v[pos + 1])
            pos += 2
        pw = jnp.asarray(self.pump_waists)
        for j in np.flatnonzero(self.learn_pump_waists):
            pw = pw.at[j].set(jnp.exp(v[pos]))
            pos += 1
        out = {"pump_coeffs": pc, "pump_waists": pw}
        if self.crystal_coeffs is not None:
            cc = jnp.asarray(self.crystal_coeffs)
            for s, j in zip(*np.nonzero(self.learn_crystal_coeffs)):
                cc = cc.at[s, j].set(v[pos] + 1j * v[pos + 1])
                pos += 2
            cw = jnp.asarray(self.crystal_waists)
            for j in np.flatnonzero(self.learn_crystal_waists):
                cw = cw.at[j].set(jnp.exp(v[pos]))
                pos += 1
            out["crystal_coeffs"] = cc
            out["crystal_waists"] = cw
        return out

    def with_vector(self, vector) -> "ParamSet":
        """Concrete ParamSet with the free vector substituted in."""
        arrays = {k: np.asarray(a) for k, a in self.unflatten(np.asarray(vector)).items()}
        return replace(self, **arrays)

    def to_json_dict(self) -> dict:
        def cpairs(arr):
            return [[float(z.real), float(z.imag)] for z in np.ravel(arr)]

        doc = {
            "pump": {
                "labels": list(self.pump_labels or ()),
                "coefficients": cpairs(self.pump_coeffs),
                "waists_m": [float(w) for w in self.pump_waists],
                "learn_coefficients": self.learn_pump_coeffs.tolist(),
                "learn_waists": self.learn_pump_waists.tolist(),
            }
        }
        if self.crystal_coeffs is None:
            doc["crystal"] = None
        else:
            doc["crystal"] = {
                "labels": list(self.crystal_labels or ()),
                "n_segments": int(self.n_segments),
                "coefficients": [cpairs(row) for row in self.crystal_coeffs],
                "waists_m": [float(w) for w in self.crystal_waists],
                "learn_coefficients": [r.tolist() for r in self.learn_crystal_coeffs],
                "learn_waists": self.learn_crystal_waists.tolist(),
            }
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ParamSet":
        def carr(pairs):
            return np.array([complex(re, im) for re, im in pairs], dtype=np.complex128)

        pump = doc["pump"]
        kwargs = dict(
            pump_coeffs=carr(pump["coefficients"]),
            pump_waists=np.asarray(pump["waists_m"], dtype=np.float64),
            learn_pump_coeffs=np.asarray(pump.get("learn_coefficients"), dtype=bool)
            if pump.get("learn_coefficients") is not None else None,
            learn_pump_waists=np.asarray(pump.get("learn_waists"), dtype=bool)
            if pump.get("learn_waists") is not None else None,
            pump_labels=tuple(pump.get("labels") or ()) or None,
        )
        crystal = doc.get("crystal")
        if crystal is not None:
            kwargs.update(
                crystal_coeffs=np.stack([carr(row) for row in crystal["coefficients"]]),
                crystal_waists=np.asarray(crystal["waists_m"], dtype=np.float64),
                learn_crystal_coeffs=np.asarray(crystal.get("learn_coefficients"), dtype=bool)
                if crystal.get("learn_coefficients") is not None else None,
                learn_crystal_waists=np.asarray(crystal.get("learn_waists"), dtype=bool)
                if crystal.get("learn_waists") is not None else None,
                crystal_labels=tuple(crystal.get("labels") or ()) or None,
            )
        return cls(**kwargs)


def build_pump(coeffs, waists, basis: ModeBasis) -> ComplexField:
    """Pump envelope: modal superposition, total power normalized to 1."""
    amp = _superpose(coeffs, waists, basis)
    power = jnp.sum(jnp.abs(amp) ** 2) * basis.grid.cell_area
    if not isinstance(power, jax.core.Tracer) and float(power) <= 1e-300:
        raise DegenerateInputError("pump coefficients are all zero")
    return ComplexField(basis.grid, amp / jnp.sqrt(power))


def _superpose(coeffs, waists, basis: ModeBasis):
    c = jnp.asarray(coeffs, dtype=jnp.complex128)
    if c.shape != (len(basis),):
        raise ConfigError(f"expected {len(basis)} coefficients, got shape {c.shape}")
    w = jnp.asarray(waists, dtype=jnp.float64)
    if w.shape != (len(basis),):
        raise ConfigError(f"expected {len(basis)} waists, got shape {w.shape}")
    amp = jnp.zeros(basis.grid.shape, dtype=jnp.complex128)
    for k, idx in enumerate(basis.indices):
        amp = amp + c[k] * mode_profile(idx, w[k], basis.grid)
    return amp


def poling_carrier(zeta: float, spec: InteractionSpec) -> float:
    """Sign of the periodic poling at depth zeta; 1.0 when unpoled."""
    if not 0.0 <= zeta <= spec.L:
        raise ConfigError(f"zeta={zeta} outside the crystal [0, {spec.L}]")
    if spec.poling_period is None:
        return 1.0
    return float(np.sign(np.cos(TWO_PI * zeta / spec.poling_period)))


def crystal_stack(coeffs, waists, basis: ModeBasis | None,
                  spec: InteractionSpec, grid: TransverseGrid) -> jnp.ndarray:
    """(n_z, nx, ny) nonlinearity profiles, peak |chi| = chi2_magnitude.

    Differentiable in coefficients and waists; this is the array the
    solver consumes. ``coeffs = None`` gives the unstructured slab.
    """
    zetas = spec.zeta_midpoints
    if spec.poling_period is not None and spec.poling_period < 4.0 * spec.dz:
        warnings.warn(
            f"poling period {spec.poling_period:g} is under-resolved by dz={spec.dz:g}",
            stacklevel=2,
        )
    carrier = jnp.asarray([poling_carrier(z, spec) for z in zetas])
    if coeffs is None:
        base = jnp.ones((spec.n_z,) + grid.shape, dtype=jnp.complex128)
        return spec.chi2_magnitude * carrier[:, None, None] * base

    c = jnp.atleast_2d(jnp.asarray(coeffs, dtype=jnp.complex128))
    n_seg = c.shape[0]
    if spec.n_z % n_seg != 0:
        raise ConfigError(f"segment count {n_seg} must divide n_z={spec.n_z}")
    if basis is None:
        raise ConfigError("structured crystal requires a mode basis")
    profiles = jnp.stack([_superpose(c[s], waists, basis) for s in range(n_seg)])
    peak = jnp.max(jnp.abs(profiles))
    if not isinstance(peak, jax.core.Tracer) and float(peak) <= 1e-300:
        raise DegenerateInputError("crystal coefficients are all zero")
    profiles = profiles * (spec.chi2_magnitude / peak)
    seg_of_step = np.arange(spec.n_z) * n_seg // spec.n_z
    return carrier[:, None, None] * profiles[seg_of_step]


def build_crystal(params: ParamSet, basis: ModeBasis | None, spec: InteractionSpec,
                  grid: TransverseGrid) -> tuple[CrystalSlice, ...]:
    """Per-step crystal slices (the public, concrete view of crystal_stack)."""
    stack = np.asarray(crystal_stack(params.crystal_coeffs, params.crystal_waists,
                                     basis, spec, grid))
    zetas = spec.zeta_midpoints
    return tuple(CrystalSlice(profile=ComplexField(grid, stack[k]), zeta=float(zetas[k]))
                 for k in range(spec.n_z))
