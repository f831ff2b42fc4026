"""From propagated ensembles to physical observables.

First-order moments are ensemble averages of projected field
coefficients. With the solver's initialization (out stacks start at
zero), the vacuum baseline of every estimator below is identically zero,
so a zero-coupling run yields zero moments in expectation without any
explicit subtraction:

    N_s[q,q']  = < conj(c_s_out[q]) c_s_out[q'] >           (signal occupations)
    N_i[q,q']  = < conj(c_i_out[q]) c_i_out[q'] >           (idler occupations)
    A[qi,qs]   = < c_i_vac[qi] c_s_out[qs] >                (pair amplitude,
                 symmetrized with the mirror pairing c_i_out c_s_vac)
    C[qi,qs]   = < conj(c_i_out[qi]) c_s_out[qs] >          (cross term; zero in
                 expectation for distinct photons, kept as a noise diagnostic)

Coincidences follow from the Gaussian-state moment factorization

    G2[qi,qs] = N_i[qi,qi] N_s[qs,qs] + |A[qi,qs]|^2 + |C[qi,qs]|^2

and the two-photon density matrix is reconstructed linearly from
projective coincidence probabilities on generator eigenbases. Kets and
matrix indices are ordered (idler, signal) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import jax.numpy as jnp
import numpy as np

from .errors import (ConfigError, EstimatorError, GridMismatchError,
                     MissingProjectionError, NormalizationError,
                     UnsupportedDimensionError)
from .modes import ModeBasis
from .solver import EnsembleState, project_ensemble


@dataclass(frozen=True)
class MomentSet:
    """First-order correlation matrices over the measurement bases."""

    n_signal: np.ndarray
    n_idler: np.ndarray
    anomalous: np.ndarray
    cross: np.ndarray
    n_realizations: int
    signal_labels: tuple[str, ...]
    idler_labels: tuple[str, ...]

    @property
    def statistical_tolerance(self) -> float:
        return 5.0 / np.sqrt(self.n_realizations)


@dataclass(frozen=True)
class CoincidenceMatrix:
    """Real coincidence table over (idler mode, signal mode)."""

    values: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    normalized: bool = False
    clipped_mass: float = 0.0

    def normalize(self) -> "CoincidenceMatrix":
        total = float(np.sum(self.values))
        if total <= 0:
            raise NormalizationError("coincidence matrix has no mass to normalize")
        return replace(self, values=self.values / total, normalized=True)

    def total(self) -> float:
        return float(np.sum(self.values))


@dataclass(frozen=True)
class DensityMatrix:
    """Two-photon density matrix on a d x d mode subspace."""

    rho: np.ndarray
    d: int
    idler_levels: tuple[str, ...]
    signal_levels: tuple[str, ...]

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.complex128)
        if rho.shape != (self.d**2, self.d**2):
            raise ConfigError(f"rho must be {self.d**2}x{self.d**2}, got {rho.shape}")
        object.__setattr__(self, "rho", rho)

    def hermiticity_residual(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.rho + self.rho.conj().T) / 2).min())

    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def validate(self, min_eig_floor: float = -0.05) -> "DensityMatrix":
        if self.hermiticity_residual() > 1e-12:
            raise NormalizationError("density matrix is not Hermitian")
        if abs(self.trace() - 1.0) > 1e-9:
            raise NormalizationError(f"density matrix trace {self.trace()} != 1")
        if self.min_eigenvalue() < min_eig_floor:
            raise NormalizationError(
                f"density matrix minimum eigenvalue {self.min_eigenvalue():.4f} "
                f"below the statistical floor {min_eig_floor}"
            )
        return self


def moment_arrays(coeffs: dict) -> tuple[jnp.ndarray, jnp.ndarray, jnp.ndarray, jnp.ndarray]:
    """(N_s, N_i, A, C) from projected coefficient stacks; jit-friendly.

    The ensemble mean is a single fixed-order reduction over the
    realization axis, so results do not depend on how realizations were
    chunked during propagation.
    """
    cs_out, cs_vac = coeffs["signal_out"], coeffs["signal_vac"]
    ci_out, ci_vac = coeffs["idler_out"], coeffs["idler_vac"]
    n = cs_out.shape[0]
    n_s = jnp.conj(cs_out).T @ cs_out / n
    n_i = jnp.conj(ci_out).T @ ci_out / n
    a = (ci_vac.T @ cs_out + ci_out.T @ cs_vac) / (2 * n)
    c = jnp.conj(ci_out).T @ cs_out / n
    return n_s, n_i, a, c


def estimate_moments(state_or_coeffs, basis_s: ModeBasis | None = None,
                     basis_i: ModeBasis | None = None,
                     signal_labels=None, idler_labels=None) -> MomentSet:
    """Ensemble-averaged first-order moments of a propagated ensemble.

    Accepts either an EnsembleState plus the two measurement bases, or a
    dict of already-projected coefficient stacks.
    """
    if isinstance(state_or_coeffs, EnsembleState):
        if basis_s is None or basis_i is None:
            raise ConfigError("measurement bases are required to project an ensemble")
        coeffs = project_ensemble(state_or_coeffs, basis_s, basis_i)
        signal_labels, idler_labels = basis_s.labels, basis_i.labels
    else:
        coeffs = state_or_coeffs
        if signal_labels is None or idler_labels is None:
            raise ConfigError("labels are required with pre-projected coefficients")
    n = int(coeffs["signal_out"].shape[0])
    if n < 2:
        raise EstimatorError(f"moment estimation needs >= 2 realizations, got {n}")
    n_s, n_i, a, c = (np.asarray(m) for m in moment_arrays(coeffs))
    return MomentSet(n_signal=n_s, n_idler=n_i, anomalous=a, cross=c, n_realizations=n,
                     signal_labels=tuple(signal_labels), idler_labels=tuple(idler_labels))


def g2_values(n_s, n_i, a, c) -> jnp.ndarray:
    """Raw Gaussian-state coincidence table (jit-friendly)."""
    return (jnp.real(jnp.diag(n_i))[:, None] * jnp.real(jnp.diag(n_s))[None, :]
            + jnp.abs(a) ** 2 + jnp.abs(c) ** 2)


def g2_from_moments(m: MomentSet) -> CoincidenceMatrix:
    """Coincidence matrix from the moment factorization, negatives clipped."""
    raw = np.asarray(g2_values(m.n_signal, m.n_idler, m.anomalous, m.cross))
    clipped = float(-np.sum(raw[raw < 0]))
    return CoincidenceMatrix(values=np.clip(raw, 0.0, None), row_labels=m.idler_labels,
                             col_labels=m.signal_labels, normalized=False,
                             clipped_mass=clipped)


def mass_by_oam_sum(cm: CoincidenceMatrix, l_idler, l_signal) -> dict[int, float]:
    """Total coincidence mass per value of l_signal + l_idler."""
    masses: dict[int, float] = {}
    for ii, li in enumerate(l_idler):
        for ss, ls in enumerate(l_signal):
            masses[int(li + ls)] = masses.get(int(li + ls), 0.0) + float(cm.values[ii, ss])
    return masses


# --- tomography -------------------------------------------------------------

def generators(d: int) -> list[np.ndarray]:
    """Hermitian operator basis spanning d x d matrices.

    sigma_0 is the identity; the remaining d^2 - 1 are the generalized
    Gell-Mann matrices rescaled so that Tr(sigma_m sigma_n) = d * delta_mn
    for every m, n (for d = 2 this is exactly the identity plus the three
    Pauli matrices).
    """
    if d < 2:
        raise ConfigError(f"tomography dimension must be >= 2, got {d}")
    mats: list[np.ndarray] = [np.eye(d, dtype=np.complex128)]
    scale = np.sqrt(d / 2.0)
    for j in range(d):
        for k in range(j + 1, d):
            sym = np.zeros((d, d), dtype=np.complex128)
            sym[j, k] = sym[k, j] = 1.0
            mats.append(scale * sym)
            anti = np.zeros((d, d), dtype=np.complex128)
            anti[j, k] = -1j
            anti[k, j] = 1j
            mats.append(scale * anti)
    for l in range(1, d):
        diag = np.zeros((d, d), dtype=np.complex128)
        for j in range(l):
            diag[j, j] = 1.0
        diag[l, l] = -l
        mats.append(scale * np.sqrt(2.0 / (l * (l + 1))) * diag)
    return mats


def generator_eigensystems(d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """(eigenvalues, eigenvector columns) for every generator, fixed order."""
    return [tuple(np.linalg.eigh(sigma)) for sigma in generators(d)]


def mub_projectors(d: int) -> list[np.ndarray]:
    """d + 1 mutually unbiased orthonormal bases (rows are basis vectors).

    Supported for prime d; for d = 2 these are the three Pauli eigenbases,
    and the computational basis counts as the first of them.
    """
    if d < 2 or any(d % q == 0 for q in range(2, d)):
        raise UnsupportedDimensionError(f"mutually unbiased bases require prime d, got {d}")
    if d == 2:
        s = 1.0 / np.sqrt(2.0)
        return [
            np.eye(2, dtype=np.complex128),                      # Z eigenbasis
            np.array([[s, s], [s, -s]], dtype=np.complex128),    # X eigenbasis
            np.array([[s, 1j * s], [s, -1j * s]], dtype=np.complex128),  # Y eigenbasis
        ]
    omega = np.exp(2j * np.pi / d)
    bases = [np.eye(d, dtype=np.complex128)]
    for k in range(d):
        rows = []
        for j in range(d):
            m = np.arange(d)
            rows.append(omega ** ((k * m * m + j * m) % d) / np.sqrt(d))
        bases.append(np.array(rows))
    return bases


def simulated_projection(m: MomentSet, ket_i, ket_s) -> float:
    """Coincidence rate for superposition detection modes.

    The detection mode annihilation operator is a_ket = sum_q conj(ket_q) a_q;
    the rate applies the moment factorization to the rank-1 projected moments.
    """
    ket_i = np.asarray(ket_i, dtype=np.complex128)
    ket_s = np.asarray(ket_s, dtype=np.complex128)
    if ket_i.shape != (m.n_idler.shape[0],) or ket_s.shape != (m.n_signal.shape[0],):
        raise GridMismatchError("ket lengths must match the moment bases")
    for ket in (ket_i, ket_s):
        if abs(np.vdot(ket, ket).real - 1.0) > 1e-9:
            raise NormalizationError("projection kets must be unit-normalized")
    ui, us = np.conj(ket_i), np.conj(ket_s)
    n_i = float(np.real(ui.conj() @ m.n_idler @ ui))
    n_s = float(np.real(us.conj() @ m.n_signal @ us))
    a = complex(ui @ m.anomalous @ us)
    c = complex(ket_i @ m.cross @ us)
    return n_i * n_s + abs(a) ** 2 + abs(c) ** 2


@dataclass(frozen=True)
class ProjectionData:
    """Projective coincidence probabilities over generator eigenstate pairs.

    Keys are (m, n, i, j): generator m on the idler, generator n on the
    signal, eigenstate indices i and j in the order produced by
    generator_eigensystems.
    """

    d: int
    probabilities: dict

    def complete(self) -> bool:
        return not self.missing()

    def missing(self) -> list[tuple[int, int, int, int]]:
        need = [(mm, nn, i, j)
                for mm in range(self.d**2) for nn in range(self.d**2)
                for i in range(self.d) for j in range(self.d)]
        return [k for k in need if k not in self.probabilities]


def tomography_projections(m: MomentSet, idler_slots, signal_slots) -> ProjectionData:
    """Simulate the full projective measurement set on a mode subspace.

    ``idler_slots``/``signal_slots`` select which positions of the moment
    bases span the d levels of each photon. Rates are normalized by the
    total coincidence mass inside the subspace, which is invariant under
    the basis rotations used here.
    """
    idler_slots = list(idler_slots)
    signal_slots = list(signal_slots)
    d = len(idler_slots)
    if len(signal_slots) != d:
        raise ConfigError("idler and signal subspaces must have equal dimension")

    def embed(vec, slots, size):
        ket = np.zeros(size, dtype=np.complex128)
        ket[slots] = vec
        return ket

    ni, ns = m.n_idler.shape[0], m.n_signal.shape[0]
    total = 0.0
    for qi in idler_slots:
        for qs in signal_slots:
            ei = np.zeros(ni, dtype=np.complex128)
            ei[qi] = 1.0
            es = np.zeros(ns, dtype=np.complex128)
            es[qs] = 1.0
            total += simulated_projection(m, ei, es)
    if total <= 0:
        raise EstimatorError("no coincidence mass inside the tomography subspace")

    eigs = generator_eigensystems(d)
    probs = {}
    for mm, (_, vecs_i) in enumerate(eigs):
        for nn, (_, vecs_s) in enumerate(eigs):
            for i in range(d):
                for j in range(d):
                    ket_i = embed(vecs_i[:, i], idler_slots, ni)
                    ket_s = embed(vecs_s[:, j], signal_slots, ns)
                    probs[(mm, nn, i, j)] = simulated_projection(m, ket_i, ket_s) / total
    return ProjectionData(d=d, probabilities=probs)


def analytic_projections(rho: np.ndarray, d: int) -> ProjectionData:
    """Exact projection probabilities of a known two-qudit density matrix."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (d * d, d * d):
        raise ConfigError(f"expected a {d*d}x{d*d} density matrix")
    eigs = generator_eigensystems(d)
    probs = {}
    for mm, (_, vi) in enumerate(eigs):
        for nn, (_, vj) in enumerate(eigs):
            for i in range(d):
                for j in range(d):
                    ket = np.kron(vi[:, i], vj[:, j])
                    probs[(mm, nn, i, j)] = float(np.real(np.conj(ket) @ rho @ ket))
    return ProjectionData(d=d, probabilities=probs)


def tomography_kets(d: int, idler_slots, signal_slots, n_idler: int, n_signal: int):
    """Constant tensors for the traced tomography path.

    Returns embedded eigen-kets of every generator for both photons
    (shape (d^2, d, n_modes)), the eigenvalue table (d^2, d), and the
    stacked two-qudit generator products (d^4, d^2, d^2).
    """
    idler_slots = np.asarray(list(idler_slots), dtype=int)
    signal_slots = np.asarray(list(signal_slots), dtype=int)
    eigs = generator_eigensystems(d)
    vals = np.stack([v for v, _ in eigs])
    kets_i = np.zeros((d * d, d, n_idler), dtype=np.complex128)
    kets_s = np.zeros((d * d, d, n_signal), dtype=np.complex128)
    for m, (_, vecs) in enumerate(eigs):
        for i in range(d):
            kets_i[m, i, idler_slots] = vecs[:, i]
            kets_s[m, i, signal_slots] = vecs[:, i]
    sigmas = generators(d)
    kron = np.stack([np.kron(sm, sn) for sm in sigmas for sn in sigmas])
    return jnp.asarray(kets_i), jnp.asarray(kets_s), jnp.asarray(vals), jnp.asarray(kron)


def traced_rho(n_s, n_i, a, c, kets_i, kets_s, eigvals, sigma_kron, d: int):
    """Differentiable linear tomographic reconstruction from raw moments.

    Mirrors tomography_projections + reconstruct_density for use inside
    jitted/differentiated loss functions; the rate normalizer is the
    coincidence mass in the computational subspace (the identity
    generator's eigenbasis, index 0).
    """
    # projected occupations per (generator, eigenstate)
    occ_i = jnp.real(jnp.einsum("miq,qp,mip->mi", kets_i, n_i, jnp.conj(kets_i)))
    occ_s = jnp.real(jnp.einsum("njq,qp,njp->nj", kets_s, n_s, jnp.conj(kets_s)))
    a_proj = jnp.einsum("miq,qp,njp->minj", jnp.conj(kets_i), a, jnp.conj(kets_s))
    c_proj = jnp.einsum("miq,qp,njp->minj", kets_i, c, jnp.conj(kets_s))
    rates = (occ_i[:, :, None, None] * occ_s[None, None, :, :]
             + jnp.abs(a_proj) ** 2 + jnp.abs(c_proj) ** 2)
    total = jnp.sum(rates[0, :, 0, :])
    probs = rates / total
    rho_mn = jnp.einsum("mi,nj,minj->mn", eigvals, eigvals, probs)
    rho = jnp.tensordot(rho_mn.reshape(-1), sigma_kron, axes=1) / (d * d)
    rho = (rho + jnp.conj(rho).T) / 2.0
    return rho / jnp.trace(rho).real


def reconstruct_density(projections: ProjectionData, d: int | None = None,
                        idler_levels=None, signal_levels=None) -> DensityMatrix:
    """Linear tomographic reconstruction from a complete projection set.

    Expansion coefficients are rho_mn = sum_ij a_m^i a_n^j p(m, n, i, j)
    with a the generator eigenvalues; the estimate is then Hermitized and
    trace-normalized. Positivity is deliberately not enforced — the
    minimum eigenvalue stays visible as a reconstruction diagnostic.
    """
    d = projections.d if d is None else d
    if d != projections.d:
        raise ConfigError(f"dimension mismatch: {d} != {projections.d}")
    missing = projections.missing()
    if missing:
        raise MissingProjectionError(missing)
    sigmas = generators(d)
    eigs = generator_eigensystems(d)
    rho = np.zeros((d * d, d * d), dtype=np.complex128)
    for mm, (vals_i, _) in enumerate(eigs):
        for nn, (vals_j, _) in enumerate(eigs):
            coeff = 0.0
            for i in range(d):
                for j in range(d):
                    coeff += vals_i[i] * vals_j[j] * projections.probabilities[(mm, nn, i, j)]
            rho += coeff * np.kron(sigmas[mm], sigmas[nn])
    rho /= d * d
    rho = (rho + rho.conj().T) / 2.0
    tr = np.trace(rho).real
    if abs(tr) < 1e-30:
        raise NormalizationError("reconstructed density matrix has zero trace")
    rho /= tr
    levels = tuple(str(k) for k in range(d))
    return DensityMatrix(rho=rho, d=d,
                         idler_levels=tuple(idler_levels or levels),
                         signal_levels=tuple(signal_levels or levels))
