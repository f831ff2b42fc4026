import numpy as np
import pytest

import spdckit as sk


class TestInteractionSpec:
    def test_collinear_degenerate_conserves_energy(self):
        spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=5e-3, n_z=10)
        assert spec.lambda_s == spec.lambda_i == 810e-9
        assert abs(spec.delta_k) < 1e-9 * spec.k_p

    def test_energy_conservation_enforced(self):
        with pytest.raises(sk.ConfigError, match="energy conservation"):
            sk.InteractionSpec(lambda_p=405e-9, lambda_s=800e-9, lambda_i=820e-9,
                               k_p=1.0, k_s=0.5, k_i=0.5, L=1e-3, n_z=4, delta_k=0.0)

    @pytest.mark.parametrize("kwargs", [
        {"L": -1e-3}, {"n_z": 0}, {"n_realizations": 1}, {"poling_period": -1e-6},
    ])
    def test_invalid_values_rejected(self, kwargs):
        base = dict(L=1e-3, n_z=4)
        base.update(kwargs)
        with pytest.raises(sk.ConfigError):
            sk.InteractionSpec.collinear(405e-9, 1.69, **base)

    def test_zeta_midpoints(self):
        spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=1e-3, n_z=4)
        assert np.allclose(spec.zeta_midpoints, [0.125e-3, 0.375e-3, 0.625e-3, 0.875e-3])
        assert spec.dz == 0.25e-3

    def test_delta_k_override(self):
        spec = sk.InteractionSpec.collinear(405e-9, 1.69, L=1e-3, n_z=4, delta_k=1e4)
        assert spec.delta_k == 1e4


class TestRngStream:
    def test_same_key_reproduces_bits(self):
        a = sk.RngStream(42, 7).complex_normal((64,))
        b = sk.RngStream(42, 7).complex_normal((64,))
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = sk.RngStream(42, 7).complex_normal((64,))
        b = sk.RngStream(42, 8).complex_normal((64,))
        assert not np.allclose(a, b)

    def test_variance_scaling(self):
        z = sk.RngStream(3, 0).complex_normal((200_000,), scale=2.0)
        assert abs(np.mean(np.abs(z) ** 2) - 4.0) < 0.1
