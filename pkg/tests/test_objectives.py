import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import spdckit as sk
from conftest import random_density
from spdckit.objectives import LossTerm


class TestKlDivergence:
    def test_identical_distributions(self):
        p = np.array([[0.25, 0.25], [0.25, 0.25]])
        assert abs(sk.kl_divergence(p, p)) < 1e-12

    def test_point_mass_vs_uniform(self):
        assert abs(sk.kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
                   - np.log(2)) < 1e-12

    def test_three_quarters_example(self):
        val = sk.kl_divergence(np.array([0.75, 0.25]), np.array([0.5, 0.5]))
        expected = 0.75 * np.log(1.5) + 0.25 * np.log(0.5)
        assert abs(val - expected) < 1e-12
        assert abs(val - 0.13081) < 1e-5

    def test_unnormalized_rejected(self):
        with pytest.raises(sk.NormalizationError):
            sk.kl_divergence(np.array([0.5, 0.4]), np.array([0.5, 0.5]))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_nonnegative_on_random_pairs(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.random(6) + 1e-3
        q = rng.random(6) + 1e-3
        assert sk.kl_divergence(p / p.sum(), q / q.sum()) >= 0


class TestL1Distance:
    def test_zero_for_equal(self):
        p = np.array([0.3, 0.7])
        assert sk.l1_distance(p, p) == 0.0

    def test_disjoint_point_masses(self):
        assert abs(sk.l1_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) - 2.0) < 1e-15

    def test_shape_mismatch(self):
        with pytest.raises(sk.GridMismatchError):
            sk.l1_distance(np.zeros(2), np.zeros(3))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = rng.random((3, 8))
        assert sk.l1_distance(a, c) <= sk.l1_distance(a, b) + sk.l1_distance(b, c) + 1e-12


class TestTraceDistance:
    def test_zero_for_identical(self):
        rho = random_density(np.random.default_rng(0), 3)
        assert sk.trace_distance(rho, rho) < 1e-15

    def test_orthogonal_pure_states(self):
        a = np.diag([1.0, 0.0]).astype(complex)
        b = np.diag([0.0, 1.0]).astype(complex)
        assert abs(sk.trace_distance(a, b) - 1.0) < 1e-12

    def test_pure_vs_maximally_mixed(self):
        a = np.diag([1.0, 0.0]).astype(complex)
        assert abs(sk.trace_distance(a, np.eye(2) / 2) - 0.5) < 1e-12

    def test_non_hermitian_rejected(self):
        bad = np.array([[0.5, 1.0], [0.0, 0.5]], dtype=complex)
        with pytest.raises(sk.ConfigError):
            sk.trace_distance(bad, np.eye(2) / 2)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_symmetric_and_triangle(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (random_density(rng, 2) for _ in range(3))
        assert abs(sk.trace_distance(a, b) - sk.trace_distance(b, a)) < 1e-10
        assert sk.trace_distance(a, c) <= (sk.trace_distance(a, b)
                                           + sk.trace_distance(b, c) + 1e-10)


class TestCompositeLoss:
    def test_single_kl_term_equals_kl(self):
        p = np.array([0.7, 0.3])
        q = np.array([0.4, 0.6])
        spec = sk.LossSpec(terms=(LossTerm("kl", 1.0, "g2"),))
        # the kl term is evaluated target-first
        assert abs(sk.composite_loss(spec, {"g2": p}, {"g2": q})
                   - sk.kl_divergence(q, p)) < 1e-12

    def test_zero_weights_give_zero(self):
        p = np.array([0.7, 0.3])
        spec = sk.LossSpec(terms=(LossTerm("kl", 0.0, "g2"), LossTerm("l1", 0.0, "g2")))
        assert sk.composite_loss(spec, {"g2": p}, {"g2": p}) == 0.0

    def test_weighted_sum(self):
        p = np.array([0.7, 0.3])
        q = np.array([0.4, 0.6])
        spec = sk.LossSpec(terms=(LossTerm("kl", 1.0, "g2"), LossTerm("l1", 1.0, "g2")))
        assert abs(sk.composite_loss(spec, {"g2": p}, {"g2": q})
                   - (sk.kl_divergence(q, p) + sk.l1_distance(p, q))) < 1e-12

    def test_missing_target_rejected(self):
        spec = sk.LossSpec(terms=(LossTerm("kl", 1.0, "g2"),))
        with pytest.raises(sk.ConfigError):
            sk.composite_loss(spec, {"g2": np.array([1.0])}, {})


class TestLossSpecValidation:
    def test_empty_terms_rejected(self):
        with pytest.raises(sk.ConfigError):
            sk.LossSpec(terms=())

    def test_unknown_kind_rejected(self):
        with pytest.raises(sk.ConfigError):
            LossTerm("wasserstein", 1.0, "g2")

    def test_negative_weight_rejected(self):
        with pytest.raises(sk.ConfigError):
            LossTerm("kl", -1.0, "g2")

    def test_trace_distance_needs_rho_target(self):
        with pytest.raises(sk.ConfigError):
            LossTerm("trace_distance", 1.0, "g2")

    def test_default_composite(self):
        spec = sk.LossSpec.default_g2()
        assert {t.kind for t in spec.terms} == {"kl", "l1"}
        assert spec.targets_needed() == {"g2"}
