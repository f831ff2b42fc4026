import jax.numpy as jnp
import numpy as np
import pytest

import spdckit as sk
from conftest import random_pure_state
from spdckit.grids import ComplexField
from spdckit.observables import (MomentSet, analytic_projections,
                                 generator_eigensystems, tomography_kets, traced_rho)
from spdckit.structure import crystal_stack


def _tmsv_run(r=0.8, n=20000, seed=7):
    """Single-cell interaction: analytically a two-mode squeezed vacuum."""
    grid = sk.make_grid(1, 1, 1.0, 1.0)
    spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=1.0, n_z=5,
                                        chi2_magnitude=r, n_realizations=n, seed=seed)
    state = sk.init_vacuum(grid, spec, noise_scale=1.0)
    pump = ComplexField(grid, jnp.ones((1, 1)))
    chi = crystal_stack(None, None, None, spec, grid)
    return sk.propagate(state, chi, pump, spec), grid


def _unit_basis(grid):
    # single flat "mode" with unit discrete norm on the 1x1 grid
    idx = (sk.ModeIndex.lg(0, 0),)
    basis = object.__new__(sk.ModeBasis)
    object.__setattr__(basis, "indices", idx)
    object.__setattr__(basis, "waists", (1.0,))
    object.__setattr__(basis, "grid", grid)
    object.__setattr__(basis, "_stack", np.ones((1, 1, 1), dtype=complex))
    return basis


class TestEstimateMoments:
    def test_zero_coupling_gives_zero_moments(self):
        grid = sk.make_grid(1, 1, 1.0, 1.0)
        spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=1.0, n_z=3,
                                            chi2_magnitude=1e-10, n_realizations=500, seed=1)
        state = sk.init_vacuum(grid, spec, noise_scale=1.0)
        pump = ComplexField(grid, jnp.ones((1, 1)))
        out = sk.propagate(state, 0.0 * crystal_stack(None, None, None, spec, grid),
                           pump, spec)
        basis = _unit_basis(grid)
        m = sk.estimate_moments(out, basis, basis)
        assert np.max(np.abs(m.n_signal)) == 0.0
        assert np.max(np.abs(m.anomalous)) == 0.0

    def test_matches_two_mode_squeezed_vacuum(self):
        r, n = 0.8, 20000
        out, grid = _tmsv_run(r=r, n=n)
        basis = _unit_basis(grid)
        m = sk.estimate_moments(out, basis, basis)
        se_n = np.sinh(r) ** 2 / np.sqrt(n)
        assert abs(m.n_signal[0, 0].real - np.sinh(r) ** 2) < 3 * se_n
        assert abs(m.n_idler[0, 0].real - np.sinh(r) ** 2) < 3 * se_n
        se_a = np.cosh(r) * np.sinh(r) / np.sqrt(n)
        assert abs(abs(m.anomalous[0, 0]) - np.cosh(r) * np.sinh(r)) < 3 * se_a

    def test_normal_blocks_hermitian(self, small_grid, thin_spec, lg_basis):
        state = sk.init_vacuum(small_grid, thin_spec, noise_scale=1.0)
        pump = ComplexField(small_grid, jnp.ones(small_grid.shape))
        out = sk.propagate(state, crystal_stack(None, None, None, thin_spec, small_grid),
                           pump, thin_spec)
        m = sk.estimate_moments(out, lg_basis, lg_basis)
        assert np.max(np.abs(m.n_signal - m.n_signal.conj().T)) < 1e-14

    def test_too_few_realizations_rejected(self, lg_basis):
        coeffs = {k: np.zeros((1, 3), dtype=complex)
                  for k in ("signal_out", "signal_vac", "idler_out", "idler_vac")}
        with pytest.raises(sk.EstimatorError):
            sk.estimate_moments(coeffs, signal_labels=lg_basis.labels,
                                idler_labels=lg_basis.labels)


def _moments(n_i, n_s, a, c=None, n=1000):
    dim_i, dim_s = np.shape(a)
    return MomentSet(
        n_signal=np.diag(np.asarray(n_s, dtype=complex)),
        n_idler=np.diag(np.asarray(n_i, dtype=complex)),
        anomalous=np.asarray(a, dtype=complex),
        cross=np.zeros((dim_i, dim_s), dtype=complex) if c is None else np.asarray(c),
        n_realizations=n,
        signal_labels=tuple(f"s{k}" for k in range(dim_s)),
        idler_labels=tuple(f"i{k}" for k in range(dim_i)))


class TestG2FromMoments:
    def test_zero_moments_give_zero_matrix(self):
        m = _moments([0, 0], [0, 0], np.zeros((2, 2)))
        cm = sk.g2_from_moments(m)
        assert np.all(cm.values == 0)
        assert cm.clipped_mass == 0.0

    def test_tmsv_closed_form(self):
        r = 0.6
        nbar = np.sinh(r) ** 2
        m = _moments([nbar], [nbar], [[np.cosh(r) * np.sinh(r)]])
        cm = sk.g2_from_moments(m)
        expected = np.sinh(r) ** 4 + np.sinh(r) ** 2 * np.cosh(r) ** 2
        assert abs(cm.values[0, 0] - expected) < 1e-12

    def test_uncorrelated_thermal_modes(self):
        m = _moments([0.2, 0.1], [0.3, 0.4], np.zeros((2, 2)))
        cm = sk.g2_from_moments(m)
        assert np.allclose(cm.values, np.outer([0.2, 0.1], [0.3, 0.4]))

    def test_normalization(self):
        m = _moments([0.2], [0.3], [[0.5]])
        cm = sk.g2_from_moments(m).normalize()
        assert abs(cm.values.sum() - 1.0) < 1e-9
        assert cm.normalized


class TestGenerators:
    def test_qubit_generators_are_identity_plus_paulis(self):
        sx = np.array([[0, 1], [1, 0]])
        sy = np.array([[0, -1j], [1j, 0]])
        sz = np.array([[1, 0], [0, -1]])
        gens = sk.generators(2)
        assert np.allclose(gens[0], np.eye(2))
        found = [any(np.allclose(g, p) for g in gens[1:]) for p in (sx, sy, sz)]
        assert all(found)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_count_and_trace_orthogonality(self, d):
        gens = sk.generators(d)
        assert len(gens) == d * d
        for i, a in enumerate(gens):
            assert np.max(np.abs(a - a.conj().T)) < 1e-14
            for j, b in enumerate(gens):
                tr = np.trace(a @ b)
                assert abs(tr - (d if i == j else 0.0)) < 1e-12

    def test_too_small_dimension_rejected(self):
        with pytest.raises(sk.ConfigError):
            sk.generators(1)


class TestMubProjectors:
    def test_qubit_mubs_are_pauli_eigenbases(self):
        bases = sk.mub_projectors(2)
        assert len(bases) == 3

    def test_qutrit_count(self):
        assert len(sk.mub_projectors(3)) == 4

    @pytest.mark.parametrize("d", [2, 3])
    def test_cross_basis_overlap(self, d):
        bases = sk.mub_projectors(d)
        for i, a in enumerate(bases):
            assert np.max(np.abs(a @ a.conj().T - np.eye(d))) < 1e-12
            for b in bases[i + 1:]:
                overlaps = np.abs(a.conj() @ b.T) ** 2
                assert np.max(np.abs(overlaps - 1.0 / d)) < 1e-12

    def test_non_prime_rejected(self):
        with pytest.raises(sk.UnsupportedDimensionError):
            sk.mub_projectors(4)


class TestSimulatedProjection:
    def _bell_moments(self):
        # pair amplitude concentrated on (i0 s1) and (i1 s0) with equal phase
        a = np.array([[0, 0.5], [0.5, 0]], dtype=complex)
        return _moments([0.25, 0.25], [0.25, 0.25], a)

    def test_basis_kets_reproduce_g2_entries(self):
        m = self._bell_moments()
        cm = sk.g2_from_moments(m)
        for i in range(2):
            for j in range(2):
                ki = np.eye(2)[i]
                ks = np.eye(2)[j]
                assert abs(sk.simulated_projection(m, ki, ks) - cm.values[i, j]) < 1e-14

    def test_orthogonal_ket_gives_zero(self):
        a = np.array([[0.7, 0], [0, 0]], dtype=complex)
        m = _moments([0.1, 0.0], [0.1, 0.0], a)
        val = sk.simulated_projection(m, np.array([0, 1.0]), np.array([0, 1.0]))
        assert val < 1e-12

    def test_bell_projection_contrast(self):
        m = self._bell_moments()
        plus = np.array([1, 1]) / np.sqrt(2)
        minus = np.array([1, -1]) / np.sqrt(2)
        bright = sk.simulated_projection(m, plus, plus)
        dark = sk.simulated_projection(m, plus, minus)
        assert bright / max(dark, 1e-30) > 50

    def test_unnormalized_ket_rejected(self):
        m = self._bell_moments()
        with pytest.raises(sk.NormalizationError):
            sk.simulated_projection(m, np.array([1.0, 1.0]), np.array([1.0, 0]))


def _bell_rho(d=2):
    psi = np.zeros(d * d, dtype=complex)
    psi[0 * d + 1] = 1 / np.sqrt(2)   # |i0 s1>
    psi[1 * d + 0] = 1 / np.sqrt(2)   # |i1 s0>
    return np.outer(psi, psi.conj())


class TestReconstructDensity:
    def test_round_trip_product_state(self):
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 0] = 1.0
        est = sk.reconstruct_density(analytic_projections(rho, 2))
        assert sk.trace_distance(est.rho, rho) < 1e-6

    def test_bell_state_corners(self):
        rho = _bell_rho()
        est = sk.reconstruct_density(analytic_projections(rho, 2))
        corners = est.rho[np.ix_([1, 2], [1, 2])].real
        assert np.allclose(corners, 0.5, atol=1e-10)

    def test_uniform_outcomes_give_maximally_mixed(self):
        probs = {}
        for mm in range(4):
            for nn in range(4):
                for i in range(2):
                    for j in range(2):
                        probs[(mm, nn, i, j)] = 0.25
        est = sk.reconstruct_density(sk.ProjectionData(d=2, probabilities=probs))
        assert np.allclose(est.rho, np.eye(4) / 4, atol=1e-12)

    def test_missing_projection_listed(self):
        proj = analytic_projections(_bell_rho(), 2)
        probs = dict(proj.probabilities)
        del probs[(1, 2, 0, 1)]
        with pytest.raises(sk.MissingProjectionError) as err:
            sk.reconstruct_density(sk.ProjectionData(d=2, probabilities=probs))
        assert (1, 2, 0, 1) in err.value.missing

    @pytest.mark.parametrize("d", [2, 3])
    def test_round_trip_random_pure_states(self, d):
        rng = np.random.default_rng(17)
        for _ in range(5):
            psi = random_pure_state(rng, d * d)
            rho = np.outer(psi, psi.conj())
            est = sk.reconstruct_density(analytic_projections(rho, d))
            assert sk.trace_distance(est.rho, rho) < 1e-6
            assert est.hermiticity_residual() < 1e-14
            assert abs(est.trace() - 1.0) < 1e-9

    def test_traced_path_matches_reference_reconstruction(self):
        # moments for a qutrit-subspace pair inside a 5-mode basis
        rng = np.random.default_rng(3)
        a = np.zeros((5, 5), dtype=complex)
        sub = [1, 2, 3]
        block = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        a[np.ix_(sub, sub)] = 0.1 * block
        n_i = np.abs(np.diag(0.01 * (block @ block.conj().T)))
        n_full_i = np.zeros(5)
        n_full_i[sub] = n_i
        m = _moments(n_full_i, n_full_i, a)
        proj = sk.tomography_projections(m, sub, sub)
        ref = sk.reconstruct_density(proj)
        kets_i, kets_s, vals, kron = tomography_kets(3, sub, sub, 5, 5)
        fast = np.asarray(traced_rho(jnp.asarray(m.n_signal), jnp.asarray(m.n_idler),
                                     jnp.asarray(m.anomalous), jnp.asarray(m.cross),
                                     kets_i, kets_s, vals, kron, 3))
        assert np.max(np.abs(fast - ref.rho)) < 1e-12

    def test_eigensystem_convention_is_stable(self):
        a = generator_eigensystems(3)
        b = generator_eigensystems(3)
        for (va, ua), (vb, ub) in zip(a, b):
            assert np.array_equal(va, vb)
            assert np.array_equal(ua, ub)


class TestOamMass:
    def test_mass_by_diagonal(self):
        cm = sk.CoincidenceMatrix(values=np.array([[0.5, 0.2], [0.1, 0.2]]),
                                  row_labels=("a", "b"), col_labels=("c", "d"))
        masses = sk.mass_by_oam_sum(cm, [-1, 1], [-1, 1])
        assert abs(masses[-2] - 0.5) < 1e-12
        assert abs(masses[0] - 0.3) < 1e-12
        assert abs(masses[2] - 0.2) < 1e-12
