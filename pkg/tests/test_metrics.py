import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mollipde.errors import InvalidArgumentError, UndefinedCorrelationError
from mollipde.grids import GridField
from mollipde.metrics import (
    aggregate_runs,
    central_difference_laplacian,
    noise_trend_correlation,
    pearson,
)


class TestPearson:
    def test_identical_vectors(self):
        assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-12)

    def test_reversed_vectors(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-12)

    def test_hand_computed_value(self):
        # direct evaluation of the covariance/stddev ratio for (1,2,3),(1,2,4)
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198, abs=1e-5)

    def test_zero_variance_raises(self):
        with pytest.raises(UndefinedCorrelationError):
            pearson([1.0, 1.0, 1.0], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            pearson([1, 2], [1, 2, 3])


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-10, 10, allow_nan=False).filter(lambda v: abs(v) > 1e-6),
       b=st.floats(-10, 10, allow_nan=False))
def test_pearson_affine_invariance(a, b):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(25)
    y = rng.standard_normal(25)
    base = pearson(x, y)
    transformed = pearson(a * x + b, y)
    assert transformed == pytest.approx(np.sign(a) * base, abs=1e-9)


class TestAggregateRuns:
    def test_exact_runs_give_unit_correlations(self):
        truth = np.sin(np.linspace(0, 3, 40))
        stats = aggregate_runs([truth, truth, truth], truth)
        assert stats.mean_corr == 1.0
        assert stats.trend_corr == 1.0
        assert stats.run_count == 3

    def test_mean_corr_improves_with_run_count(self):
        rng = np.random.default_rng(5)
        truth = np.sin(np.linspace(0, 3, 200))
        runs = [truth + 2.0 * rng.standard_normal(200) for _ in range(8)]
        few = aggregate_runs(runs[:2], truth)
        many = aggregate_runs(runs, truth)
        assert many.mean_corr > few.mean_corr

    def test_constant_prediction_surfaces_error(self):
        truth = np.linspace(0, 1, 10)
        with pytest.raises(UndefinedCorrelationError):
            aggregate_runs([np.ones(10), truth], truth)

    def test_single_run_rejected(self):
        with pytest.raises(InvalidArgumentError):
            aggregate_runs([np.arange(5.0)], np.arange(5.0))


class TestNoiseTrend:
    def test_identical_fields_high_correlation(self):
        rng = np.random.default_rng(7)
        vals = rng.standard_normal(400)
        f = GridField(vals, spacing=(0.01,))
        assert noise_trend_correlation(f, f, window_radius=0.05) == pytest.approx(1.0)

    def test_independent_noise_low_correlation(self):
        rng = np.random.default_rng(8)
        a = GridField(rng.standard_normal(400), spacing=(0.01,))
        b = GridField(rng.standard_normal(400), spacing=(0.01,))
        assert abs(noise_trend_correlation(a, b, window_radius=0.05)) < 0.5


class TestLaplacianOracle:
    def test_quadratic(self):
        xs = 0.1 * np.arange(20)
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        lap = central_difference_laplacian(gx ** 2 + gy ** 2, (0.1, 0.1))
        np.testing.assert_allclose(lap[1:-1, 1:-1], 4.0, atol=1e-9)

    def test_1d(self):
        xs = 0.01 * np.arange(200)
        lap = central_difference_laplacian(xs ** 3, (0.01,))
        np.testing.assert_allclose(lap[1:-1], 6 * xs[1:-1], atol=1e-6)
