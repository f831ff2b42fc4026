import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import spdckit as sk
from spdckit.oracle import perturbative_amplitude
from spdckit.structure import crystal_stack


W = 10e-6


@pytest.fixture(scope="module")
def grid():
    return sk.grid_for_waist(W, 32)


@pytest.fixture(scope="module")
def pump_basis(grid):
    return sk.ModeBasis.lg([-2, 0, 2], [0], W, grid)


class TestBuildPump:
    def test_single_gaussian_is_power_normalized(self, grid):
        basis = sk.ModeBasis.lg([0], [0], W, grid)
        pump = sk.build_pump(np.array([1.0 + 0j]), np.array([W]), basis)
        assert abs(pump.power() - 1.0) < 1e-12

    def test_learned_qutrit_amplitudes_build(self, pump_basis):
        # amplitude triple on LG(0,-2)/LG(0,0)/LG(0,+2)
        coeffs = np.array([0.64, 0.33, 0.66], dtype=complex)
        pump = sk.build_pump(coeffs, np.full(3, W), pump_basis)
        assert abs(pump.power() - 1.0) < 1e-12
        amp = np.asarray(pump.amplitude)
        # dominant +-2 components give a ring-like intensity with a bright center
        assert np.isfinite(amp).all()

    @settings(max_examples=15, deadline=None)
    @given(scale=st.floats(0.01, 100.0))
    def test_normalization_invariant_under_scaling(self, scale):
        grid = sk.grid_for_waist(W, 32)
        basis = sk.ModeBasis.lg([0, 1], [0], W, grid)
        c = np.array([0.8 + 0.1j, 0.3 - 0.4j])
        a = sk.build_pump(c, np.full(2, W), basis)
        b = sk.build_pump(scale * c, np.full(2, W), basis)
        assert np.max(np.abs(np.asarray(a.amplitude) - np.asarray(b.amplitude))) < 1e-9

    def test_all_zero_coefficients_rejected(self, pump_basis):
        with pytest.raises(sk.DegenerateInputError):
            sk.build_pump(np.zeros(3, dtype=complex), np.full(3, W), pump_basis)


class TestPolingCarrier:
    def test_unpoled_is_unity(self):
        spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=1e-3, n_z=4)
        assert sk.poling_carrier(0.3e-3, spec) == 1.0

    def test_square_wave_signs(self):
        spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=1e-3, n_z=4,
                                            poling_period=1e-3)
        assert sk.poling_carrier(0.0, spec) == 1.0
        assert sk.poling_carrier(0.5e-3, spec) == -1.0

    def test_outside_crystal_rejected(self):
        spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=1e-3, n_z=4)
        with pytest.raises(sk.ConfigError):
            sk.poling_carrier(2e-3, spec)

    def test_first_fourier_coefficient(self):
        spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=1e-3, n_z=4,
                                            poling_period=0.25e-3)
        z = (np.arange(4000) + 0.5) * spec.poling_period / 4000
        carrier = np.array([sk.poling_carrier(val, spec) for val in z])
        c1 = np.mean(carrier * np.exp(-2j * np.pi * z / spec.poling_period))
        assert abs(abs(c1) - 2 / np.pi) < 1e-3


class TestBuildCrystal:
    def _spec(self, n_z=4, **kw):
        return sk.InteractionSpec.collinear(405e-9, 1.69, L=1e-3, n_z=n_z,
                                            chi2_magnitude=2.5, **kw)

    def test_uniform_profile_along_z(self, grid):
        basis = sk.ModeBasis.lg([0], [0], W, grid)
        params = sk.ParamSet(pump_coeffs=np.array([1.0 + 0j]), pump_waists=np.array([W]),
                             crystal_coeffs=np.array([[1.0 + 0j]]),
                             crystal_waists=np.array([W]))
        slices = sk.build_crystal(params, basis, self._spec(), grid)
        assert len(slices) == 4
        ref = np.asarray(slices[0].profile.amplitude)
        for s in slices[1:]:
            assert np.array_equal(np.asarray(s.profile.amplitude), ref)
        assert abs(np.max(np.abs(ref)) - 2.5) < 1e-12  # peak pinned to the gain scale

    def test_segment_switch_at_half_length(self, grid):
        basis = sk.ModeBasis.lg([0], [0, 1], W, grid)
        params = sk.ParamSet(pump_coeffs=np.array([1.0 + 0j]), pump_waists=np.array([W]),
                             crystal_coeffs=np.array([[1.0, 0.0], [0.0, 1.0]],
                                                     dtype=complex),
                             crystal_waists=np.full(2, W))
        slices = sk.build_crystal(params, basis, self._spec(), grid)
        a01 = np.asarray(slices[0].profile.amplitude)
        assert np.array_equal(a01, np.asarray(slices[1].profile.amplitude))
        assert not np.allclose(a01, np.asarray(slices[2].profile.amplitude))

    def test_unstructured_crystal_is_flat(self, grid):
        spec = self._spec()
        stack = np.asarray(crystal_stack(None, None, None, spec, grid))
        assert stack.shape == (4, grid.nx, grid.ny)
        assert np.all(stack == 2.5)

    def test_segments_must_divide_steps(self, grid):
        basis = sk.ModeBasis.lg([0], [0], W, grid)
        params = sk.ParamSet(pump_coeffs=np.array([1.0 + 0j]), pump_waists=np.array([W]),
                             crystal_coeffs=np.ones((3, 1), dtype=complex),
                             crystal_waists=np.array([W]))
        with pytest.raises(sk.ConfigError, match="divide"):
            sk.build_crystal(params, basis, self._spec(n_z=4), grid)

    def test_all_zero_crystal_rejected(self, grid):
        basis = sk.ModeBasis.lg([0], [0], W, grid)
        params = sk.ParamSet(pump_coeffs=np.array([1.0 + 0j]), pump_waists=np.array([W]),
                             crystal_coeffs=np.zeros((1, 1), dtype=complex),
                             crystal_waists=np.array([W]))
        with pytest.raises(sk.DegenerateInputError):
            sk.build_crystal(params, basis, self._spec(), grid)

    def test_qpm_recovers_two_over_pi_of_matched_amplitude(self, grid):
        # first-order quasi-phase matching vs. the same geometry at delta_k = 0
        delta_k = 2 * np.pi / 0.1e-3
        n_z = 400
        gauss = sk.ModeBasis.lg([0], [0], 2 * W, grid)
        pump = sk.build_pump(np.array([1.0 + 0j]), np.array([2 * W]), gauss)
        meas = sk.ModeBasis.lg([0], [0], 2 * W, grid)
        spec_qpm = sk.InteractionSpec.collinear(
            405e-9, 1.69, L=1e-3, n_z=n_z, delta_k=delta_k,
            poling_period=2 * np.pi / delta_k)
        spec_ref = sk.InteractionSpec.collinear(405e-9, 1.69, L=1e-3, n_z=n_z, delta_k=0.0)
        amp_qpm = perturbative_amplitude(
            pump, np.asarray(crystal_stack(None, None, None, spec_qpm, grid)),
            meas, meas, spec_qpm)
        amp_ref = perturbative_amplitude(
            pump, np.asarray(crystal_stack(None, None, None, spec_ref, grid)),
            meas, meas, spec_ref)
        ratio = abs(amp_qpm.c[0, 0]) / abs(amp_ref.c[0, 0])
        assert abs(ratio - 2 / np.pi) < 0.03 * 2 / np.pi


class TestParamSet:
    def _params(self):
        return sk.ParamSet(
            pump_coeffs=np.array([0.5 + 0.5j, 1.0]),
            pump_waists=np.array([W, 2 * W]),
            crystal_coeffs=np.array([[1.0, 2.0j], [0.5, 0.0]]),
            crystal_waists=np.array([W, W]),
            learn_pump_coeffs=np.array([True, False]),
            learn_pump_waists=np.array([False, True]),
            learn_crystal_coeffs=np.array([[True, False], [False, True]]),
            learn_crystal_waists=np.array([True, False]),
            pump_labels=("a", "b"), crystal_labels=("c", "d"))

    def test_flatten_unflatten_round_trip(self):
        p = self._params()
        vec, names = p.flatten()
        assert len(vec) == len(names) == 2 + 1 + 4 + 1
        q = p.with_vector(vec)
        assert np.allclose(q.pump_coeffs, p.pump_coeffs)
        assert np.allclose(q.pump_waists, p.pump_waists)
        assert np.allclose(q.crystal_coeffs, p.crystal_coeffs)

    def test_vector_substitution(self):
        p = self._params()
        vec, names = p.flatten()
        vec2 = vec.copy()
        vec2[names.index("pump_coeff[0].re")] = 7.0
        q = p.with_vector(vec2)
        assert q.pump_coeffs[0] == 7.0 + 0.5j
        assert q.pump_coeffs[1] == p.pump_coeffs[1]

    def test_waists_stay_positive_under_large_negative_steps(self):
        p = self._params()
        vec, names = p.flatten()
        vec[names.index("log_pump_waist[1]")] -= 50.0
        q = p.with_vector(vec)
        assert q.pump_waists[1] > 0

    def test_json_round_trip(self):
        p = self._params()
        q = sk.ParamSet.from_json_dict(p.to_json_dict())
        assert np.allclose(q.pump_coeffs, p.pump_coeffs)
        assert np.allclose(q.crystal_coeffs, p.crystal_coeffs)
        assert np.array_equal(q.learn_crystal_coeffs, p.learn_crystal_coeffs)
        assert q.pump_labels == p.pump_labels

    def test_mask_shape_validation(self):
        with pytest.raises(sk.ConfigError):
            sk.ParamSet(pump_coeffs=np.array([1.0 + 0j]), pump_waists=np.array([W]),
                        learn_pump_coeffs=np.array([True, False]))

    def test_negative_waist_rejected(self):
        with pytest.raises(sk.ConfigError):
            sk.ParamSet(pump_coeffs=np.array([1.0 + 0j]), pump_waists=np.array([-W]))
