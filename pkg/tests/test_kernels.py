import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from expertkm.errors import ValidationError
from expertkm.kernels import (
    Bandwidth,
    KernelSpec,
    WeightCache,
    adaptive_simpson,
    as_bandwidth,
    default_kernel,
    raw_weights,
    scaled_weight,
    univariate_truncated_gaussian,
)


def box_kernel(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


BOX = KernelSpec(box_kernel, dimension=1, support=(-1.0, 1.0), name="box")


class TestUnivariate:
    def test_value_at_zero(self):
        # phi(0) / (Phi(2) - Phi(-2)) = 0.39894 / 0.95450
        assert univariate_truncated_gaussian(0.0) == pytest.approx(0.41796, abs=1e-4)

    def test_outside_support(self):
        assert univariate_truncated_gaussian(3.0) == 0.0
        assert univariate_truncated_gaussian(-2.0001) == 0.0

    def test_unit_mass_by_quadrature_oracle(self):
        mass, _ = integrate.quad(univariate_truncated_gaussian, -2, 2, limit=200)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_matches_normal_density_inside(self):
        c = norm.cdf(2) - norm.cdf(-2)
        u = np.linspace(-2, 2, 41)
        np.testing.assert_allclose(univariate_truncated_gaussian(u), norm.pdf(u) / c, rtol=1e-12)


class TestProductKernel:
    def test_square_of_univariate(self):
        k2 = default_kernel(2)
        expected = univariate_truncated_gaussian(0.0) ** 2
        assert expected == pytest.approx(0.17469, abs=1e-4)
        assert k2.evaluate([0.0, 0.0]) == pytest.approx(expected, rel=1e-15)

    def test_one_coordinate_outside_kills_product(self):
        assert default_kernel(2).evaluate([0.0, 3.0]) == 0.0

    def test_dimension_one_is_univariate(self):
        u = 0.7
        assert default_kernel(1).evaluate([u]) == univariate_truncated_gaussian(u)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            default_kernel(2).evaluate([0.0, 0.0, 0.0])

    def test_powers_to_high_dimension_exactly(self):
        one = float(univariate_truncated_gaussian(0.3))
        for k in (2, 3, 4):
            spec = default_kernel(k)
            assert spec.evaluate([0.3] * k) == pytest.approx(one**k, rel=1e-12)


class TestMomentValidation:
    def test_unnormalized_kernel_rejected(self):
        with pytest.raises(ValidationError):
            KernelSpec(lambda u: np.where(np.abs(u) <= 1, 1.0, 0.0), support=(-1, 1))

    def test_asymmetric_kernel_rejected(self):
        with pytest.raises(ValidationError):
            KernelSpec(
                lambda u: np.where((u >= 0) & (u <= 1), 1.0, 0.0), support=(-1, 1)
            )

    def test_validate_false_allows_test_kernels(self):
        KernelSpec(lambda u: 2.0 * box_kernel(u), support=(-1, 1), validate=False)


class TestScaledWeight:
    def test_self_weight_scaled_by_bandwidth(self):
        b = Bandwidth(np.array([0.5]))
        w = scaled_weight(b, [1.3], [1.3], default_kernel(1))
        assert w == pytest.approx(0.83592, abs=2e-4)

    def test_distance_four_bandwidths_is_outside(self):
        # distance 2 at b = 0.5 puts the argument at 4, past the support edge
        b = Bandwidth(np.array([0.5]))
        assert scaled_weight(b, [3.0], [1.0], default_kernel(1)) == 0.0

    def test_two_dim_self_weight(self):
        b = Bandwidth(np.array([1.0, 1.0]))
        w = scaled_weight(b, [0.0, 0.0], [0.0, 0.0], default_kernel(2))
        assert w == pytest.approx(0.17469, abs=1e-4)

    def test_symmetry_in_arguments(self):
        b = Bandwidth(np.array([0.7, 1.3]))
        spec = default_kernel(2)
        assert scaled_weight(b, [1.0, 2.0], [1.5, 1.1], spec) == scaled_weight(
            b, [1.5, 1.1], [1.0, 2.0], spec
        )

    def test_riemann_normalization(self):
        # sum over a fine z grid of scaled weights times spacing tends to 1
        b = Bandwidth(np.array([0.5]))
        spec = default_kernel(1)
        spacing = 0.001
        grid = np.arange(-1.5, 1.5, spacing)[:, None]
        total = raw_weights(b, grid, [0.0], spec).sum() / b.det * spacing
        assert total == pytest.approx(1.0, abs=1e-3)


class TestBandwidth:
    def test_det_is_product(self):
        assert Bandwidth(np.array([0.5, 2.0])).det == 1.0

    def test_positive_entries_required(self):
        with pytest.raises(ValidationError):
            Bandwidth(np.array([0.5, 0.0]))

    def test_schedule_formula(self):
        n, rho = 2000, 0.3
        expected = (math.log(n) / n**rho) ** 1.0
        assert Bandwidth.from_schedule(n, 1, rho).diagonal[0] == pytest.approx(expected)

    def test_schedule_k_root(self):
        b1 = Bandwidth.from_schedule(5000, 1, 0.3).diagonal[0]
        b2 = Bandwidth.from_schedule(5000, 2, 0.3).diagonal[0]
        assert b2 == pytest.approx(math.sqrt(b1))

    def test_schedule_rho_range(self):
        with pytest.raises(ValidationError):
            Bandwidth.from_schedule(100, 1, 0.6)

    def test_as_bandwidth_broadcasts_scalar(self):
        bw = as_bandwidth(0.5, 3)
        np.testing.assert_array_equal(bw.diagonal, [0.5, 0.5, 0.5])

    def test_as_bandwidth_dimension_check(self):
        with pytest.raises(ValidationError):
            as_bandwidth([0.5, 1.0], 3)


class TestL2Norm:
    def test_truncated_gaussian_value(self):
        # oracle: integral over [-2, 2] of (phi/(Phi(2)-Phi(-2)))^2
        c = norm.cdf(2) - norm.cdf(-2)
        oracle, _ = integrate.quad(lambda u: (norm.pdf(u) / c) ** 2, -2, 2, limit=200)
        assert oracle == pytest.approx(0.308182, abs=5e-4)
        assert default_kernel(1).l2_norm() == pytest.approx(oracle, abs=1e-8)

    def test_product_structure(self):
        one = default_kernel(1).l2_norm()
        assert default_kernel(2).l2_norm() == pytest.approx(one**2, rel=1e-12)
        assert default_kernel(2).l2_norm() == pytest.approx(0.094976, abs=5e-4)

    def test_box_kernel_analytic(self):
        # integral of (1/2)^2 over [-1, 1] is exactly 1/2
        assert BOX.l2_norm() == pytest.approx(0.5, abs=1e-10)


class TestAdaptiveSimpson:
    def test_polynomial_exact(self):
        assert adaptive_simpson(lambda u: u**3 + u, -1.0, 2.0) == pytest.approx(
            (2.0**4 - 1.0) / 4.0 + (4.0 - 1.0) / 2.0, abs=1e-10
        )

    def test_against_scipy(self):
        f = lambda u: math.exp(-(u**2)) * math.cos(3 * u)
        expected, _ = integrate.quad(f, -2, 2)
        assert adaptive_simpson(f, -2, 2) == pytest.approx(expected, abs=1e-8)


class TestWeightCache:
    def test_unique_evaluation_count(self):
        Z = np.array([[0.0], [0.5], [1.2]])
        cache = WeightCache(Z, Bandwidth(np.array([1.0])), default_kernel(1))
        assert cache.n_unique_evaluations == 4

    def test_unique_evaluations_actually_performed(self):
        # count product-kernel evaluations through a counting univariate
        calls = {"points": 0}

        def counting(u):
            u = np.asarray(u, dtype=float)
            calls["points"] += u.size
            return box_kernel(u)

        spec = KernelSpec(counting, dimension=1, support=(-1.0, 1.0), validate=False)
        n = 7
        Z = np.arange(n, dtype=float)[:, None] * 0.1
        WeightCache(Z, Bandwidth(np.array([1.0])), spec)
        assert calls["points"] == n * (n - 1) // 2 + 1

    def test_identical_covariates_all_self_value(self):
        Z = np.zeros((5, 2))
        cache = WeightCache(Z, Bandwidth(np.array([1.0, 1.0])), default_kernel(2))
        np.testing.assert_array_equal(cache.table, np.full((5, 5), cache.self_value))

    def test_compact_support_zeroes_far_pairs(self):
        Z = np.array([[0.0], [5.0]])
        cache = WeightCache(Z, Bandwidth(np.array([1.0])), default_kernel(1))
        assert cache.table[0, 1] == 0.0

    def test_symmetry_and_diagonal(self):
        rng = np.random.default_rng(7)
        Z = rng.normal(size=(20, 2))
        cache = WeightCache(Z, Bandwidth(np.array([0.8, 1.1])), default_kernel(2))
        np.testing.assert_array_equal(cache.table, cache.table.T)
        np.testing.assert_array_equal(np.diag(cache.table), np.full(20, cache.self_value))

    def test_entries_match_direct_recomputation_exactly(self):
        rng = np.random.default_rng(11)
        Z = rng.normal(size=(15, 1))
        bw = Bandwidth(np.array([0.9]))
        spec = default_kernel(1)
        cache = WeightCache(Z, bw, spec)
        for m in range(15):
            np.testing.assert_array_equal(cache.table[:, m], raw_weights(bw, Z, Z[m], spec))

    def test_scaled_weight_times_det_matches_cache(self):
        rng = np.random.default_rng(13)
        Z = rng.normal(size=(6, 2))
        bw = Bandwidth(np.array([0.7, 1.4]))
        spec = default_kernel(2)
        cache = WeightCache(Z, bw, spec)
        for i in range(6):
            for j in range(6):
                assert scaled_weight(bw, Z[i], Z[j], spec) * bw.det == cache.table[i, j]
