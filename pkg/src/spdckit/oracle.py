"""First-order perturbative reference for the stochastic pipeline.

The pair amplitude is computed as a direct phase-matched overlap
quadrature — plain NumPy, no propagation code shared with the solver —
so agreement between the two routes is a genuine cross-check. The
quadrature neglects diffraction of the projection modes inside the
crystal; comparisons should therefore use Rayleigh ranges well beyond
the crystal length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, GridMismatchError
from .grids import ComplexField
from .interaction import InteractionSpec
from .modes import ModeBasis
from .observables import CoincidenceMatrix


@dataclass(frozen=True)
class PairAmplitude:
    """Two-photon amplitude C[qi, qs] with its normalization constant."""

    c: np.ndarray
    normalization: float
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]

    def normalized(self) -> np.ndarray:
        return self.c / np.sqrt(self.normalization)


def perturbative_amplitude(pump: ComplexField, crystal, basis_s: ModeBasis,
                           basis_i: ModeBasis, spec: InteractionSpec) -> PairAmplitude:
    """C[qi, qs] = sum_z dz e^{-i dk z} * integral chi * pump * conj(mode_s) * conj(mode_i).

    ``crystal`` is the slice sequence from build_crystal (or the raw
    (n_z, nx, ny) stack, already carrying the gain normalization).
    """
    if basis_s.grid != pump.grid or basis_i.grid != pump.grid:
        raise GridMismatchError("bases must live on the pump grid")
    if isinstance(crystal, (list, tuple)):
        chi = np.stack([np.asarray(s.profile.amplitude) for s in crystal])
    else:
        chi = np.asarray(crystal)
    if chi.shape != (spec.n_z,) + pump.grid.shape:
        raise GridMismatchError(f"crystal stack shape {chi.shape} does not match")
    phases = np.exp(-1j * spec.delta_k * spec.zeta_midpoints)
    # z-integrated driving field: sum_k dz e^{-i dk z_k} chi_k(r) * pump(r)
    driven = np.tensordot(phases, chi, axes=1) * spec.dz * np.asarray(pump.amplitude)
    ms = np.conj(basis_s.stack())
    mi = np.conj(basis_i.stack())
    c = np.einsum("ixy,xy,sxy->is", mi, driven, ms) * pump.grid.cell_area**2
    norm = float(np.sum(np.abs(c) ** 2))
    return PairAmplitude(c=c, normalization=norm,
                         row_labels=basis_i.labels, col_labels=basis_s.labels)


def oracle_g2(amp: PairAmplitude) -> CoincidenceMatrix:
    """Born-rule coincidence table |C|^2, normalized to total mass 1."""
    if not np.all(np.isfinite(amp.c)):
        raise DegenerateInputError("pair amplitude contains non-finite entries")
    if amp.normalization <= 0:
        raise DegenerateInputError("pair amplitude is identically zero")
    values = np.abs(amp.c) ** 2 / amp.normalization
    return CoincidenceMatrix(values=values, row_labels=amp.row_labels,
                             col_labels=amp.col_labels, normalized=True)
