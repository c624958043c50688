import numpy as np
import pytest
from scipy import stats

from conquant.errors import (
    EmptyInput,
    InvalidCounts,
    LengthMismatch,
    UnsortedGrid,
)
from conquant.evaluation import (
    calibration_mae,
    classify_levels,
    empirical_coverage,
    monotonize,
    pit_calibration_curve,
    pit_values,
    wilson_interval,
)


class TestEmpiricalCoverage:
    def test_huge_estimates_cover_everything(self):
        y = np.random.default_rng(0).normal(size=50)
        assert empirical_coverage(np.full(50, 1e12), y) == 1.0

    def test_half_coverage(self):
        assert empirical_coverage(np.full(4, 2.5), [1, 2, 3, 4]) == 0.5

    def test_boundary_uses_nonstrict_inequality(self):
        y = np.array([1.0, 2.0, 3.0])
        assert empirical_coverage(y, y) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            empirical_coverage([1.0], [1.0, 2.0])


class TestCalibrationMae:
    def test_perfect_calibration(self):
        levels = np.array([0.1, 0.5, 0.9])
        cov = np.tile(levels[:, None], (1, 7))
        assert calibration_mae(cov, levels) == 0.0

    def test_single_level(self):
        assert calibration_mae([[0.4, 0.6]], [0.5]) == pytest.approx(0.1)

    def test_nan_cells_excluded(self):
        cov = np.array([[0.4, np.nan], [0.9, 0.9]])
        assert calibration_mae(cov, [0.5, 0.9]) == pytest.approx(0.1 / 3)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            calibration_mae(np.full((2, 3), np.nan), [0.1, 0.2])

    def test_nonnegative_zero_iff_exact(self):
        rng = np.random.default_rng(1)
        levels = np.array([0.2, 0.8])
        cov = np.clip(levels[:, None] + rng.normal(0, 0.01, (2, 5)), 0, 1)
        assert calibration_mae(cov, levels) > 0


class TestWilsonInterval:
    def test_zero_successes_boundary(self):
        ci = wilson_interval(0, 10, 1.96)
        assert ci.lo == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_value(self):
        # Independently evaluated closed form at p = 0.5, n = 100, z = 1.96.
        ci = wilson_interval(50, 100, 1.96)
        assert ci.lo == pytest.approx(0.4038, abs=1e-3)
        assert ci.hi == pytest.approx(0.5962, abs=1e-3)

    def test_degenerate_z_zero(self):
        ci = wilson_interval(30, 40, 0.0)
        assert ci.lo == ci.hi == pytest.approx(0.75)

    def test_contains_point_estimate(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(1, 500))
            s = int(rng.integers(0, n + 1))
            ci = wilson_interval(s, n)
            assert ci.lo - 1e-12 <= s / n <= ci.hi + 1e-12
            assert 0.0 <= ci.lo <= ci.hi <= 1.0

    def test_width_shrinks_with_n(self):
        for p in (0.2, 0.5, 0.8):
            k = 100
            wide = wilson_interval(int(p * k), k)
            narrow = wilson_interval(int(p * 4 * k), 4 * k)
            assert (narrow.hi - narrow.lo) < (wide.hi - wide.lo)

    def test_invalid_counts(self):
        with pytest.raises(InvalidCounts):
            wilson_interval(5, 4)
        with pytest.raises(InvalidCounts):
            wilson_interval(0, 0)


class TestClassifyLevels:
    def test_exact_level_with_huge_n(self):
        classes, _ = classify_levels([(0.5, 500_000, 1_000_000)])
        assert classes == ["within"]

    def test_overcoverage_is_below(self):
        classes, _ = classify_levels([(0.5, 9900, 10_000)])
        assert classes == ["below"]

    def test_undercoverage_is_above(self):
        classes, _ = classify_levels([(0.9, 100, 10_000)])
        assert classes == ["above"]

    def test_summary_percentages(self):
        cells = [(0.5, 250, 500)] * 35 + [(0.5, 490, 500)] * 25
        _, summary = classify_levels(cells)
        assert summary["within"] == pytest.approx(100 * 35 / 60)

    def test_order_invariance(self):
        rng = np.random.default_rng(3)
        cells = [
            (float(lv), int(rng.integers(0, 1000)), 1000)
            for lv in np.linspace(0.05, 0.95, 19)
        ]
        _, s1 = classify_levels(cells)
        _, s2 = classify_levels(list(reversed(cells)))
        assert s1 == s2


class TestPit:
    def test_below_grid_is_at_most_min_level(self):
        val = pit_values([0.25, 0.75], [1.0, 3.0], 0.5)
        assert val <= 0.25

    def test_linear_midpoint(self):
        assert pit_values([0.25, 0.75], [1.0, 3.0], 2.0) == pytest.approx(0.5)

    def test_monotone_in_y(self):
        levels = np.linspace(0.05, 0.95, 19)
        grid = stats.norm.ppf(levels)
        ys = np.linspace(-4, 4, 200)
        vals = pit_values(levels, grid, ys)
        assert np.all(np.diff(vals) >= 0)
        assert vals[0] == 0.0 and vals[-1] == 1.0

    def test_unsorted_grid_raises(self):
        with pytest.raises(UnsortedGrid):
            pit_values([0.75, 0.25], [1.0, 3.0], 0.5)
        with pytest.raises(UnsortedGrid):
            pit_values([0.25, 0.75], [3.0, 1.0], 0.5)

    def test_normal_oracle_ks_uniform(self):
        # True normal quantile grid at 99 levels: PIT of N(0,1) draws should be
        # indistinguishable from uniform.
        levels = np.round(np.arange(0.01, 1.0, 0.01), 2)
        grid = stats.norm.ppf(levels)
        rng = np.random.default_rng(17)
        pits = pit_values(levels, grid, rng.standard_normal(10_000))
        assert stats.kstest(pits, "uniform").pvalue > 0.01

    def test_monotonize_preserves_multiset(self):
        rng = np.random.default_rng(4)
        vals = rng.normal(size=30)
        mono = monotonize(vals)
        assert np.all(np.diff(mono) >= 0)
        assert np.array_equal(np.sort(vals), mono)


class TestPitCurve:
    def test_all_zero_pits(self):
        curve = pit_calibration_curve(np.zeros(10), [0.1, 0.5, 0.9])
        assert [v for _, v in curve] == [1.0, 1.0, 1.0]

    def test_uniform_grid_near_diagonal(self):
        pits = np.arange(0.01, 1.0, 0.01)
        curve = pit_calibration_curve(pits, np.linspace(0.05, 0.95, 19))
        assert max(abs(v - lv) for lv, v in curve) <= 0.011

    def test_oracle_sample_near_diagonal(self):
        levels = np.round(np.arange(0.01, 1.0, 0.01), 2)
        grid = stats.norm.ppf(levels)
        rng = np.random.default_rng(18)
        pits = pit_values(levels, grid, rng.standard_normal(10_000))
        curve = pit_calibration_curve(pits, np.linspace(0.05, 0.95, 19))
        assert max(abs(v - lv) for lv, v in curve) < 0.03

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            pit_calibration_curve([1.5])
