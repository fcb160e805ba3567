import numpy as np
import pytest

from expertkm.bandwidth import (
    CoordinateDescent,
    CvConfig,
    cv_score_at_t,
    cv_scores,
    direct_loo_score,
    functional_cv,
    select_bandwidth,
)
from expertkm.errors import AllCandidatesDegenerateError, ValidationError
from expertkm.kernels import Bandwidth, WeightCache, default_kernel

from .oracles import direct_loo_cv


def random_dataset(rng, n=None, k=1):
    n = n if n is not None else int(rng.integers(4, 30))
    w = np.round(rng.uniform(0, 5, n), 1)
    d = rng.integers(0, 2, n).astype(float)
    eta = d * rng.integers(0, 2, n)
    Z = rng.normal(size=(n, k))
    return w, d, eta, Z


class TestShortcutIdentity:
    def test_matches_package_direct_implementation(self):
        rng = np.random.default_rng(0)
        for _ in range(15):
            w, d, eta, Z = random_dataset(rng)
            t = float(rng.uniform(0, 5))
            b = float(rng.uniform(0.2, 2.5))
            shortcut, exc_s = cv_score_at_t(t, w, eta, Z, b, use_judgments=True)
            direct, exc_d = direct_loo_score(t, w, eta, Z, b, use_judgments=True)
            assert exc_s == exc_d
            if np.isfinite(shortcut) or np.isfinite(direct):
                assert shortcut == pytest.approx(direct, abs=1e-10)

    def test_matches_independent_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            w, d, eta, Z = random_dataset(rng)
            t = float(rng.uniform(0, 5))
            b = float(rng.uniform(0.2, 2.5))
            responses = (w <= t).astype(float) * eta
            oracle, exc_o = direct_loo_cv(t, w, responses, Z, [b])
            shortcut, exc_s = cv_score_at_t(t, w, eta, Z, b, use_judgments=True)
            assert exc_s == exc_o
            if np.isfinite(shortcut) or np.isfinite(oracle):
                assert shortcut == pytest.approx(oracle, abs=1e-10)

    def test_per_observation_residual_ratio_identity(self):
        # held-in vs held-out residual ratio equals 1 - K(0)/G_m exactly
        rng = np.random.default_rng(23)
        kernel = default_kernel(1)
        for _ in range(10):
            n = int(rng.integers(4, 30))
            w = np.round(rng.uniform(0, 5, n), 1)
            eta = rng.integers(0, 2, n).astype(float)
            Z = rng.normal(size=(n, 1))
            t = float(rng.uniform(0, 5))
            b = Bandwidth(np.array([float(rng.uniform(0.3, 2.0))]))
            y = (w <= t).astype(float) * eta
            from expertkm.kernels import raw_weights

            k0 = kernel.at_zero()
            for m in range(n):
                km = raw_weights(b, Z, Z[m], kernel)
                g = km.sum()
                if g <= k0:
                    continue
                held_in = y[m] - float(km @ y) / g
                keep = np.arange(n) != m
                g_minus = km[keep].sum()
                held_out = y[m] - float(km[keep] @ y[keep]) / g_minus
                if abs(held_out) < 1e-12:
                    continue
                assert held_in / held_out == pytest.approx(1.0 - k0 / g, abs=1e-10)

    def test_two_point_symmetric_hand_case(self):
        # n=2 at distance 1 with b=1: each leave-one-out estimate is the
        # other's response
        w = np.array([1.0, 3.0])
        eta = np.array([1.0, 1.0])
        Z = np.array([[0.0], [1.0]])
        t = 2.0
        shortcut, _ = cv_score_at_t(t, w, eta, Z, 1.0, use_judgments=True)
        # y = (1, 0); LOO estimates are (0, 1); squared errors (1, 1)
        assert shortcut == pytest.approx(1.0, abs=1e-12)
        direct, _ = direct_loo_score(t, w, eta, Z, 1.0, use_judgments=True)
        assert shortcut == pytest.approx(direct, abs=1e-14)

    def test_isolated_points_excluded_and_score_nan(self):
        w = np.array([1.0, 2.0, 3.0])
        eta = np.ones(3)
        Z = np.array([[0.0], [10.0], [20.0]])
        score, excluded = cv_score_at_t(1.5, w, eta, Z, 0.5, use_judgments=True)
        assert np.isnan(score)
        assert excluded == 3

    def test_identical_covariates_far_horizon_scores_zero(self):
        w = np.array([1.0, 2.0, 3.0])
        eta = np.ones(3)
        Z = np.zeros((3, 1))
        score, excluded = cv_score_at_t(10.0, w, eta, Z, 1.0, use_judgments=True)
        assert score == pytest.approx(0.0, abs=1e-28)
        assert excluded == 0


class TestCacheEquivalence:
    def test_cached_and_uncached_bit_identical(self):
        rng = np.random.default_rng(2)
        w, d, eta, Z = random_dataset(rng, n=40, k=2)
        bw = Bandwidth(np.array([0.8, 1.2]))
        kernel = default_kernel(2)
        cache = WeightCache(Z, bw, kernel)
        grid = np.unique(w)
        with_cache = cv_scores(w, eta, Z, bw, grid, kernel=kernel, cache=cache)
        without = cv_scores(w, eta, Z, bw, grid, kernel=kernel, cache=None)
        np.testing.assert_array_equal(with_cache.observed, without.observed)
        np.testing.assert_array_equal(with_cache.events, without.events)

    def test_blocked_evaluation_matches_single_block(self):
        rng = np.random.default_rng(3)
        w, d, eta, Z = random_dataset(rng, n=37)
        grid = np.unique(w)
        one = cv_scores(w, eta, Z, 0.9, grid, block_size=7)
        whole = cv_scores(w, eta, Z, 0.9, grid, block_size=1000)
        np.testing.assert_allclose(one.observed, whole.observed, atol=1e-14)


class TestFunctionalCv:
    def test_zero_weight_function_scores_zero(self):
        rng = np.random.default_rng(4)
        w, d, eta, Z = random_dataset(rng, n=20)
        config = CvConfig(weight_fn=lambda s: np.zeros(len(s)))
        assert functional_cv(1.0, w, eta, Z, config).score == 0.0

    def test_single_point_grid_is_point_value(self):
        rng = np.random.default_rng(5)
        w, d, eta, Z = random_dataset(rng, n=20)
        t0 = float(np.median(w))
        config = CvConfig(t_grid=[t0])
        result = functional_cv(1.0, w, eta, Z, config)
        obs, _ = cv_score_at_t(t0, w, eta, Z, 1.0, use_judgments=False)
        evt, _ = cv_score_at_t(t0, w, eta, Z, 1.0, use_judgments=True)
        assert result.score == pytest.approx(obs**2 + evt**2, rel=1e-12)

    def test_weight_rescaling_rescales_score(self):
        rng = np.random.default_rng(6)
        w, d, eta, Z = random_dataset(rng, n=25)
        base = functional_cv(1.0, w, eta, Z, CvConfig()).score
        doubled = functional_cv(
            1.0, w, eta, Z, CvConfig(weight_fn=lambda s: 2.0 * np.ones(len(s)))
        ).score
        assert doubled == pytest.approx(2.0 * base, rel=1e-12)

    def test_argmin_invariant_to_weight_rescaling(self):
        rng = np.random.default_rng(7)
        w, d, eta, Z = random_dataset(rng, n=40)
        flat = select_bandwidth(w, eta, Z, CvConfig(grid=[[0.3, 0.8, 2.0]]))
        scaled = select_bandwidth(
            w, eta, Z, CvConfig(grid=[[0.3, 0.8, 2.0]], weight_fn=lambda s: 5.0 * np.ones(len(s)))
        )
        np.testing.assert_array_equal(flat.selected.diagonal, scaled.selected.diagonal)


class TestSelectBandwidth:
    def test_single_candidate_returned(self):
        rng = np.random.default_rng(8)
        w, d, eta, Z = random_dataset(rng, n=15)
        report = select_bandwidth(w, eta, Z, CvConfig(grid=[[0.7]]))
        assert report.selected.diagonal[0] == 0.7
        assert len(report.rows) == 1

    def test_tie_breaks_to_larger_bandwidth(self):
        # identical covariates: every bandwidth gives identical scores
        w = np.array([1.0, 2.0, 3.0, 4.0])
        eta = np.array([1.0, 0.0, 1.0, 0.0])
        Z = np.zeros((4, 1))
        report = select_bandwidth(w, eta, Z, CvConfig(grid=[[0.5, 1.0, 2.0]]))
        assert report.selected.diagonal[0] == 2.0

    def test_all_candidates_degenerate_raises(self):
        w = np.array([1.0, 2.0])
        eta = np.ones(2)
        Z = np.array([[0.0], [100.0]])
        with pytest.raises(AllCandidatesDegenerateError):
            select_bandwidth(w, eta, Z, CvConfig(grid=[[0.1, 0.2]]))

    def test_selected_ise_close_to_grid_best(self):
        # smooth synthetic truth: W | Z=z is exponential with rate e^{0.5 z};
        # compare integrated squared error of the fitted observed-time CDF
        rng = np.random.default_rng(9)
        n = 350
        Z = rng.normal(size=(n, 1))
        w = rng.exponential(np.exp(-0.5 * Z[:, 0]))
        eta = np.ones(n)
        grid = [0.05, 0.3, 1.0, 3.0]
        report = select_bandwidth(
            w, eta, Z, CvConfig(grid=[grid], max_grid_points=48)
        )

        def ise(b):
            from expertkm.estimator import conditional_cdf

            zs = np.linspace(-1.0, 1.0, 9)
            ts = np.linspace(0.1, 2.5, 13)
            total = 0.0
            for z0 in zs:
                h = conditional_cdf(w, Z, b, [z0])
                truth = 1.0 - np.exp(-ts * np.exp(0.5 * z0))
                total += np.mean((h.value(ts) - truth) ** 2)
            return total

        errors = {b: ise(b) for b in grid}
        chosen = float(report.selected.diagonal[0])
        assert errors[chosen] <= 2.0 * min(errors.values())

    def test_report_table_layout(self):
        rng = np.random.default_rng(10)
        w, d, eta, Z = random_dataset(rng, n=12)
        report = select_bandwidth(w, eta, Z, CvConfig(grid=[[0.5, 1.0]]))
        table = report.to_table()
        assert table.shape == (2, 3)

    def test_grid_dimension_validation(self):
        rng = np.random.default_rng(11)
        w, d, eta, Z = random_dataset(rng, n=10, k=2)
        with pytest.raises(ValidationError):
            select_bandwidth(w, eta, Z, CvConfig(grid=[[0.5], [0.5], [0.5]]))

    def test_coordinate_descent_improves_or_matches_start(self):
        rng = np.random.default_rng(12)
        n = 120
        Z = rng.normal(size=(n, 1))
        w = rng.exponential(np.exp(-0.5 * Z[:, 0]))
        eta = np.ones(n)
        cd = CoordinateDescent(initial=[1.0], max_sweeps=4)
        report = select_bandwidth(w, eta, Z, CvConfig(coordinate_descent=cd))
        start_score = report.rows[0].score
        best_score = min(r.score for r in report.rows if np.isfinite(r.score))
        selected_row = [r for r in report.rows if tuple(report.selected.diagonal) == r.diagonal]
        assert selected_row and selected_row[0].score == best_score
        assert best_score <= start_score

    def test_two_dim_grid_product(self):
        rng = np.random.default_rng(13)
        w, d, eta, Z = random_dataset(rng, n=25, k=2)
        report = select_bandwidth(w, eta, Z, CvConfig(grid=[[0.5, 1.0], [0.8, 1.6]]))
        assert len(report.rows) == 4
