import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from toponet.errors import DimensionError, InsufficientDataError, NumericError
from toponet.metrics import (
    GroupStats,
    effective_dimensionality,
    effective_dimensionality_from_spectrum,
    fit_integration_window,
    grid_positions,
    integration_window,
    pairwise_correlation_vs_distance,
    read_theta_csv,
    selectivity_map,
    selectivity_t,
    structural_similarity,
    write_theta_csv,
)


def planted_features(lambdas, n=400, seed=0, rotate=True):
    """Features whose sample covariance has exactly the eigenvalues ``lambdas``."""
    rng = np.random.default_rng(seed)
    k = len(lambdas)
    Z = rng.normal(size=(n, k))
    Z -= Z.mean(axis=0)
    q, _ = np.linalg.qr(Z)
    Z = q * np.sqrt(n - 1)  # Z.T @ Z / (n - 1) == I
    X = Z * np.sqrt(lambdas)
    if rotate:
        Q, _ = np.linalg.qr(rng.normal(size=(k, k)))
        X = X @ Q.T
    return X


class TestEffectiveDimensionality:
    def test_uniform_spectrum(self):
        assert effective_dimensionality(planted_features([1, 1, 1, 1])) == pytest.approx(4.0, abs=1e-10)

    def test_rank_one(self):
        rng = np.random.default_rng(1)
        X = np.outer(rng.normal(size=100), rng.normal(size=6))
        assert effective_dimensionality(X) == pytest.approx(1.0, abs=1e-10)

    def test_two_one_spectrum(self):
        assert effective_dimensionality(planted_features([2, 1])) == pytest.approx(1.8, abs=1e-10)
        assert effective_dimensionality_from_spectrum([2, 1]) == 9 / 5

    def test_constant_features_error(self):
        with pytest.raises(NumericError):
            effective_dimensionality(np.ones((10, 3)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 1000), scale=st.floats(0.01, 100))
    def test_rotation_and_scale_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(50, 6)) @ rng.normal(size=(6, 6))
        Q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        ed = effective_dimensionality(X)
        assert 1 - 1e-9 <= ed <= 6 + 1e-9
        assert effective_dimensionality(X @ Q) == pytest.approx(ed, rel=1e-8)
        assert effective_dimensionality(scale * X) == pytest.approx(ed, rel=1e-8)


class TestSmoothness:
    def test_position_determined_responses_decrease_with_distance(self):
        h = w = 8
        pos = grid_positions(h, w)
        rng = np.random.default_rng(0)
        # each stimulus is a random smooth field sampled at the unit positions
        n = 300
        freqs = rng.normal(scale=0.25, size=(n, 2))
        phases = rng.uniform(0, 2 * np.pi, size=n)
        R = np.cos(freqs @ pos.T + phases[:, None])
        curve = pairwise_correlation_vs_distance(pos, R, 10)
        assert np.all(np.diff(curve.bin_means) < 0)
        assert curve.smoothness > 0
        assert np.all(np.diff(curve.bin_centers) > 0)
        assert curve.smoothness == curve.bin_means.max() - curve.bin_means.min()

    def test_independent_units_near_zero(self):
        pos = grid_positions(8, 8)
        R = np.random.default_rng(1).normal(size=(500, 64))
        assert pairwise_correlation_vs_distance(pos, R).smoothness < 0.15

    def test_two_units_single_bin_errors(self):
        r = np.arange(5.0)
        with pytest.raises(InsufficientDataError):
            pairwise_correlation_vs_distance([(0, 0), (0, 1)], np.stack([r, r], axis=1), 10)

    def test_dead_units_excluded(self):
        pos = grid_positions(4, 4)
        R = np.random.default_rng(2).normal(size=(50, 16))
        R[:, 3] = 0.0
        curve = pairwise_correlation_vs_distance(pos, R)
        assert np.all(np.abs(curve.bin_means) <= 1)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            pairwise_correlation_vs_distance(grid_positions(2, 2), np.zeros((5, 3)))

    def test_shuffle_control(self):
        h = w = 6
        pos = grid_positions(h, w)
        wins = 0
        for trial in range(20):
            rng = np.random.default_rng(100 + trial)
            f = rng.normal(scale=0.3, size=(200, 2))
            R = np.cos(f @ pos.T + rng.uniform(0, 6.3, size=(200, 1))) + 0.1 * rng.normal(size=(200, 36))
            shuffled = R[:, rng.permutation(36)]
            wins += pairwise_correlation_vs_distance(pos, R).smoothness > pairwise_correlation_vs_distance(pos, shuffled).smoothness
        assert wins >= 19


class TestSelectivity:
    def test_equal_means(self):
        assert selectivity_t(GroupStats(1.0, 2.0, 5), GroupStats(1.0, 0.5, 9)) == 0.0

    def test_plugged_values(self):
        assert selectivity_t(GroupStats(2.0, 1.0, 2), GroupStats(0.0, 1.0, 2)) == pytest.approx(2.0, abs=1e-15)

    def test_antisymmetry(self):
        a, b = GroupStats(1.3, 0.7, 10), GroupStats(-0.2, 1.1, 6)
        assert selectivity_t(a, b) == -selectivity_t(b, a)

    def test_zero_variance_error(self):
        with pytest.raises(NumericError):
            selectivity_t(GroupStats(1.0, 0.0, 3), GroupStats(0.0, 0.0, 3))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), nc=st.integers(2, 30), no=st.integers(2, 30))
    def test_matches_scipy_welch(self, seed, nc, no):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(1, 2, size=nc), rng.normal(0, 1, size=no)
        t = selectivity_t(GroupStats.from_samples(a), GroupStats.from_samples(b))
        assert t == pytest.approx(stats.ttest_ind(a, b, equal_var=False).statistic, abs=1e-10)

    def test_map_matches_per_unit(self):
        rng = np.random.default_rng(3)
        A, B = rng.normal(size=(7, 12)), rng.normal(size=(9, 12))
        tmap = selectivity_map(A, B, (3, 4))
        assert tmap.shape == (3, 4)
        for u in range(12):
            t = selectivity_t(GroupStats.from_samples(A[:, u]), GroupStats.from_samples(B[:, u]))
            assert tmap.reshape(-1)[u] == pytest.approx(t, abs=1e-12)

    def test_identical_groups_zero_map(self):
        A = np.random.default_rng(4).normal(size=(6, 5))
        np.testing.assert_array_equal(selectivity_map(A, A), np.zeros(5))


class TestSSIM:
    def test_self_similarity(self):
        a = np.random.default_rng(0).normal(size=(10, 12))
        assert structural_similarity(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_negation_is_negative(self):
        a = np.random.default_rng(1).normal(size=(9, 9))
        a -= a.mean()
        assert structural_similarity(a, -a) < 0

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
        assert structural_similarity(a, b) == structural_similarity(b, a)

    def test_matches_skimage(self):
        skm = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(3)
        a = rng.normal(size=(16, 20))
        b = 0.6 * a + 0.4 * rng.normal(size=(16, 20))
        rng_ = max(a.max(), b.max()) - min(a.min(), b.min())
        ref = skm.structural_similarity(a, b, win_size=7, data_range=rng_, use_sample_covariance=True)
        assert structural_similarity(a, b) == pytest.approx(ref, abs=1e-10)

    def test_errors(self):
        with pytest.raises(NumericError):
            structural_similarity(np.ones((7, 7)), np.ones((7, 7)))
        with pytest.raises(DimensionError):
            structural_similarity(np.zeros((6, 6)), np.ones((6, 6)))
        with pytest.raises(DimensionError):
            structural_similarity(np.zeros((7, 7)), np.ones((8, 7)))


class TestIntegrationWindow:
    deltas = np.arange(32.0)

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(0, 10), b=st.floats(0, 10), c=st.floats(0, 1))
    def test_unit_at_zero(self, a, b, c):
        assert integration_window(0.0, a, b, c) == 1.0

    def test_power_law_recovered(self):
        fit = fit_integration_window(self.deltas, integration_window(self.deltas, 0.8, 2.0, 1.0))
        assert abs(fit.a - 0.8) <= 0.05 and fit.c >= 0.95

    def test_exponential_recovered(self):
        fit = fit_integration_window(self.deltas, integration_window(self.deltas, 1.5, 1.2, 0.0))
        assert abs(fit.b - 1.2) <= 0.05 and fit.c <= 0.05

    def test_fit_beats_every_grid_start(self):
        rng = np.random.default_rng(0)
        y = np.clip(integration_window(self.deltas, 0.6, 0.4, 0.5) + 0.01 * rng.normal(size=32), 0, 1.05)
        fit = fit_integration_window(self.deltas, y)
        assert fit.residual >= 0 and 0 <= fit.c <= 1 and fit.a >= 0 and fit.b >= 0
        for a0 in (0.0, 1.0, 2.0, 3.0):
            for b0 in (0.0, 1.0, 2.0, 3.0):
                for c0 in (0.0, 0.25, 0.5, 0.75, 1.0):
                    r = integration_window(self.deltas, a0, b0, c0) - y
                    assert fit.residual <= r @ r

    def test_input_validation(self):
        with pytest.raises(InsufficientDataError):
            fit_integration_window([0, 1, 2], [1, 0.5, 0.2])
        with pytest.raises(ValueError):
            fit_integration_window([1, 2, 3, 4], [1, 0.5, 0.2, 0.1])
        with pytest.raises(ValueError):
            fit_integration_window([0, 1, 2, 3], [1, 0.5, 2.0, 0.1])

    def test_csv_roundtrip(self, tmp_path):
        y = integration_window(self.deltas, 0.5, 0.5, 0.5)
        write_theta_csv(tmp_path / "t.csv", self.deltas, y)
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == "delta,theta"
        d, t = read_theta_csv(tmp_path / "t.csv")
        np.testing.assert_array_equal(d, self.deltas)
        np.testing.assert_array_equal(t, y)
