import numpy as np
import pytest

import spdckit as sk
from spdckit.modes import mode_field


W = 10e-6


@pytest.fixture(scope="module")
def grid():
    return sk.grid_for_waist(W, 64)


class TestLgModes:
    def test_fundamental_peak_amplitude(self, grid):
        f = sk.lg_mode(sk.ModeIndex.lg(0, 0), W, grid)
        peak = np.abs(np.asarray(f.amplitude)[grid.nx // 2, grid.ny // 2])
        assert abs(peak - np.sqrt(2 / np.pi) / W) / peak < 1e-6

    def test_vortex_null_at_origin(self, grid):
        f = sk.lg_mode(sk.ModeIndex.lg(1, 0), W, grid)
        assert np.abs(np.asarray(f.amplitude)[grid.nx // 2, grid.ny // 2]) == 0.0

    def test_orthogonality(self, grid):
        a = sk.lg_mode(sk.ModeIndex.lg(0, 0), W, grid)
        b = sk.lg_mode(sk.ModeIndex.lg(1, 0), W, grid)
        assert abs(sk.inner_product(a, b)) < 1e-6

    def test_azimuthal_phase_winding(self, grid):
        # exp(+i l phi): a quarter turn from +x to +y advances the phase by l*pi/2
        f = np.asarray(sk.lg_mode(sk.ModeIndex.lg(1, 0), W, grid).amplitude)
        cx, cy = grid.nx // 2, grid.ny // 2
        on_x = f[cx + 6, cy]   # phi = 0
        on_y = f[cx, cy + 6]   # phi = pi/2
        assert abs(np.angle(on_y / on_x) - np.pi / 2) < 1e-9

    def test_unit_discrete_norm(self, grid):
        for l, p in [(0, 0), (-2, 1), (3, 2)]:
            f = sk.lg_mode(sk.ModeIndex.lg(l, p), W, grid)
            assert abs(f.power() - 1.0) < 1e-12

    def test_truncation_rejected(self, grid):
        window = grid.nx * grid.dx
        with pytest.raises(sk.ConfigError, match="truncated"):
            sk.lg_mode(sk.ModeIndex.lg(0, 0), 0.6 * window, grid)

    def test_family_mismatch_rejected(self, grid):
        with pytest.raises(sk.ConfigError):
            sk.lg_mode(sk.ModeIndex.hg(0, 0), W, grid)


class TestHgModes:
    def test_ground_mode_equals_lg00(self, grid):
        hg = np.asarray(sk.hg_mode(sk.ModeIndex.hg(0, 0), W, grid).amplitude)
        lg = np.asarray(sk.lg_mode(sk.ModeIndex.lg(0, 0), W, grid).amplitude)
        assert np.max(np.abs(hg - lg)) < 1e-10 * np.max(np.abs(lg))

    def test_odd_mode_null_line(self, grid):
        f = np.asarray(sk.hg_mode(sk.ModeIndex.hg(1, 0), W, grid).amplitude)
        assert np.max(np.abs(f[grid.nx // 2, :])) == 0.0

    def test_parity_under_x_flip(self, grid):
        for n in (1, 2):
            f = np.asarray(sk.hg_mode(sk.ModeIndex.hg(n, 0), W, grid).amplitude)
            # x -> -x maps index j to (nx - j); row 0 has no mirror partner
            flipped = np.roll(f[::-1, :], 1, axis=0)
            err = np.abs(flipped - (-1.0) ** n * f)[1:, :]
            assert np.max(err) < 1e-9 * np.max(np.abs(f))

    def test_orthogonality(self, grid):
        a = sk.hg_mode(sk.ModeIndex.hg(1, 0), W, grid)
        b = sk.hg_mode(sk.ModeIndex.hg(2, 0), W, grid)
        assert abs(sk.inner_product(a, b)) < 1e-6


class TestModeBasis:
    def test_gram_matrix_is_identity(self, grid):
        basis = sk.ModeBasis.lg(range(-2, 3), range(2), W, grid)
        gram = basis.gram()
        assert np.max(np.abs(gram - np.eye(len(basis)))) < 1e-6

    def test_hg_gram_matrix_is_identity(self, grid):
        basis = sk.ModeBasis.hg(range(3), range(3), W, grid)
        assert np.max(np.abs(basis.gram() - np.eye(len(basis)))) < 1e-6

    def test_canonical_ordering(self, grid):
        basis = sk.ModeBasis(indices=(sk.ModeIndex.lg(1), sk.ModeIndex.lg(-1),
                                      sk.ModeIndex.lg(0, 1), sk.ModeIndex.lg(0)),
                             waists=(W,) * 4, grid=grid)
        assert basis.labels == ("LG(l=-1,p=0)", "LG(l=+0,p=0)", "LG(l=+0,p=1)",
                                "LG(l=+1,p=0)")

    def test_duplicate_indices_rejected(self, grid):
        with pytest.raises(sk.ConfigError, match="unique"):
            sk.ModeBasis(indices=(sk.ModeIndex.lg(0), sk.ModeIndex.lg(0)),
                         waists=(W, W), grid=grid)

    def test_lg_to_hg_change_of_basis(self, grid):
        # HG(1,0) = (LG(l=+1) + LG(l=-1)) / sqrt(2) up to a fixed global phase
        lg_p = np.asarray(sk.lg_mode(sk.ModeIndex.lg(1, 0), W, grid).amplitude)
        lg_m = np.asarray(sk.lg_mode(sk.ModeIndex.lg(-1, 0), W, grid).amplitude)
        combo = sk.ComplexField(grid, (lg_p + lg_m) / np.sqrt(2))
        hg = sk.hg_mode(sk.ModeIndex.hg(1, 0), W, grid)
        overlap = sk.inner_product(combo, hg)
        assert abs(abs(overlap) - 1.0) < 1e-6

    def test_cache_returns_same_object(self, grid):
        a = mode_field(sk.ModeIndex.lg(2, 1), W, grid)
        b = mode_field(sk.ModeIndex.lg(2, 1), W, grid)
        assert a is b


class TestDecompose:
    def test_single_mode_coefficients(self, grid):
        basis = sk.ModeBasis.lg(range(-1, 2), range(2), W, grid)
        k = basis.position(sk.ModeIndex.lg(0, 1))
        coeffs = sk.decompose(basis.mode(k), basis)
        expected = np.zeros(len(basis))
        expected[k] = 1.0
        assert np.max(np.abs(coeffs - expected)) < 1e-6

    def test_linearity(self, grid):
        basis = sk.ModeBasis.lg([0], range(2), W, grid)
        f = sk.ComplexField(grid, 0.6 * basis.stack()[0] + 0.8 * basis.stack()[1])
        coeffs = sk.decompose(f, basis)
        assert np.allclose(coeffs, [0.6, 0.8], atol=1e-9)

    def test_zero_field(self, grid, lg_basis):
        coeffs = sk.decompose(sk.zero_field(lg_basis.grid), lg_basis)
        assert np.all(coeffs == 0)

    def test_reconstruction_of_in_span_component(self, grid):
        basis = sk.ModeBasis.lg(range(-1, 2), range(2), W, grid)
        rng = np.random.default_rng(4)
        c = rng.normal(size=len(basis)) + 1j * rng.normal(size=len(basis))
        f = sk.synthesize(c, basis)
        assert np.max(np.abs(sk.decompose(f, basis) - c)) < 1e-8

    def test_grid_mismatch(self, lg_basis):
        other = sk.make_grid(16, 16, 1e-6, 1e-6)
        with pytest.raises(sk.GridMismatchError):
            sk.decompose(sk.zero_field(other), lg_basis)
