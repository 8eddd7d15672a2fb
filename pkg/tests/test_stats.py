import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from src.core.simulate import check_grid, experiment_key, map_replicates, replicate_rng
from src.core.stats import (
    central_moment,
    dkw_width,
    empirical_kolmogorov,
    fit_exp_rate,
    fit_log_slope,
    kolmogorov_error,
    normal_cdf,
    summarize,
    tail_curve,
    variance_error,
)
from src.errors import EmptySample, InvalidGrid, NonPositiveSd, NonPositiveValue, TooFewPoints


def test_normal_cdf_reference_points():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(1.959963984540054) == pytest.approx(0.975, abs=1e-10)
    assert normal_cdf(-8.0) == pytest.approx(6.22096057427178e-16, rel=1e-8)


class TestKolmogorov:
    def test_single_point(self):
        assert empirical_kolmogorov([0.0], 0.0, 1.0) == 0.5

    def test_midpoint_quantiles(self):
        count = 100
        samples = special.ndtri((np.arange(1, count + 1) - 0.5) / count)
        assert empirical_kolmogorov(samples, 0.0, 1.0) == pytest.approx(0.005, abs=1e-12)

    def test_normal_draws(self, rng):
        assert empirical_kolmogorov(rng.standard_normal(10_000), 0.0, 1.0) <= 0.02

    def test_standardisation(self):
        samples = 3.0 + 2.0 * special.ndtri((np.arange(1, 51) - 0.5) / 50)
        assert empirical_kolmogorov(samples, 3.0, 2.0) == pytest.approx(0.01, abs=1e-12)

    @pytest.mark.parametrize("sd", [0.0, -1.0])
    def test_non_positive_sd(self, sd):
        with pytest.raises(NonPositiveSd):
            empirical_kolmogorov([1.0, 2.0], 0.0, sd)

    def test_empty(self):
        with pytest.raises(EmptySample):
            empirical_kolmogorov([], 0.0, 1.0)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_range(self, values):
        assert 0.0 <= empirical_kolmogorov(values, 0.0, 1.0) <= 1.0

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=40),
           st.floats(0.1, 10), st.floats(-5, 5))
    @settings(max_examples=50, deadline=None)
    def test_affine_invariance(self, values, scale, shift):
        x = np.asarray(values)
        moved = scale * x + shift
        assert empirical_kolmogorov(moved, shift, scale) == pytest.approx(empirical_kolmogorov(x, 0.0, 1.0), abs=1e-9)


class TestMoments:
    def test_constant(self):
        assert all(central_moment([4.0] * 5, r) == 0.0 for r in (1, 2, 3, 4))

    def test_pm1(self):
        assert central_moment([-1.0, 1.0], 2) == 1.0
        assert central_moment([-1.0, 1.0, -1.0, 1.0], 3) == 1.0

    def test_empty(self):
        with pytest.raises(EmptySample):
            central_moment([], 2)

    def test_variance_error_of_constant_is_zero(self):
        assert variance_error([2.0] * 10) == 0.0

    def test_second_moment_is_biased_variance(self, rng):
        x = rng.normal(2.0, 3.0, size=1000)
        assert central_moment(x, 2) == pytest.approx((len(x) - 1) / len(x) * np.var(x, ddof=1), abs=1e-12)


class TestSummarize:
    def test_fields(self, rng):
        values = rng.normal(1.0, 2.0, size=5000)
        summary = summarize(values, orders=(2, 4))
        assert summary.count == 5000
        assert summary.variance == pytest.approx(values.var(ddof=1))
        assert set(summary.central_moments) == {2.0, 4.0}
        assert not summary.degenerate
        assert summary.d_kolmogorov <= 0.03

    def test_degenerate(self):
        summary = summarize([1.0, 1.0, 1.0])
        assert summary.degenerate
        assert summary.d_kolmogorov is None
        assert summary.variance == 0.0


class TestTailCurve:
    def test_threshold_zero_and_beyond_max(self):
        curve = tail_curve([1.0, -2.0, 0.5], [0.0, 3.0])
        assert curve.exceedance.tolist() == [1.0, 0.0]
        assert curve.standard_errors.tolist() == [0.0, 0.0]

    def test_counts_ties(self):
        curve = tail_curve([1.0, 2.0, 2.0, 3.0], [2.0])
        assert curve.exceedance[0] == 0.75

    def test_thresholds_must_increase(self):
        with pytest.raises(ValueError):
            tail_curve([1.0], [1.0, 1.0])

    @given(st.lists(st.floats(-20, 20), max_size=50),
           st.lists(st.floats(0, 25), min_size=1, max_size=10, unique=True))
    @settings(max_examples=60, deadline=None)
    def test_non_increasing_in_threshold(self, samples, thresholds):
        curve = tail_curve(samples, sorted(thresholds))
        assert np.all(np.diff(curve.exceedance) <= 0)


class TestSlopes:
    def test_square(self):
        slope, _, _ = fit_log_slope([(x, x ** 2) for x in (1, 2, 4, 8)])
        assert slope == pytest.approx(2.0, abs=1e-12)

    def test_constant(self):
        assert fit_log_slope([(1, 3.0), (2, 3.0), (4, 3.0)])[0] == 0.0

    def test_inverse_root(self):
        slope, _, _ = fit_log_slope([(x, 7 / math.sqrt(x)) for x in (16, 64, 256)])
        assert slope == pytest.approx(-0.5, abs=1e-12)

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            fit_log_slope([(1, 1.0), (2, 2.0)])

    def test_non_positive(self):
        with pytest.raises(NonPositiveValue):
            fit_log_slope([(1, 1.0), (2, 0.0), (3, 1.0)])

    def test_exp_rate(self):
        slope, intercept, _ = fit_exp_rate([(t, 2.0 * 0.5 ** t) for t in range(1, 6)])
        assert slope == pytest.approx(math.log(0.5), abs=1e-12)
        assert intercept == pytest.approx(math.log(2.0), abs=1e-12)


def test_dkw_widths():
    assert dkw_width(200, 0.05) == pytest.approx(math.sqrt(math.log(40.0) / 400.0))
    assert kolmogorov_error(100) < dkw_width(100)


def test_dkw_envelope_holds_across_seeds():
    count = 10_000
    width = dkw_width(count, 0.01)
    assert width == pytest.approx(0.0163, abs=1e-4)
    misses = sum(
        empirical_kolmogorov(np.random.default_rng(seed).standard_normal(count), 0.0, 1.0) > width
        for seed in range(100)
    )
    # upper 98% quantile of Binomial(100, 0.01)
    assert misses <= 3


# ---------------------------------------------------------------------------
#  Seeding and fan-out
# ---------------------------------------------------------------------------

def test_replicate_streams_are_reproducible():
    a = replicate_rng(7, 'exp', 64, 3).random(4)
    b = replicate_rng(7, 'exp', 64, 3).random(4)
    c = replicate_rng(7, 'exp', 64, 4).random(4)
    d = replicate_rng(7, 'other', 64, 3).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert experiment_key('exp') == experiment_key('exp')


def test_map_replicates_keeps_order():
    calls = []
    out = map_replicates(lambda i: i * i, 20, workers=4, on_done=lambda: calls.append(1))
    assert out == [i * i for i in range(20)]
    assert len(calls) == 20


@pytest.mark.parametrize("grid", [[], [0, 4], [8, 8], [16, 4]])
def test_check_grid_rejects(grid):
    with pytest.raises(InvalidGrid):
        check_grid(grid)


def test_check_grid_accepts():
    assert check_grid((4, 16, 64)) == [4, 16, 64]
