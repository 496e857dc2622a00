import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compatkit.divergence import (
    MetricSpec,
    column_space_contains,
    deviance,
    project_interval,
    project_linear,
    ssd,
)
from compatkit.errors import InvalidInputError, SingularError
from compatkit.families import GlmFamily


def random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


class TestMetricSpec:
    def test_rejects_asymmetric(self):
        with pytest.raises(InvalidInputError):
            MetricSpec(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(SingularError):
            MetricSpec(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_rejects_nonpositive_diagonal(self):
        with pytest.raises(SingularError):
            MetricSpec(np.array([1.0, 0.0]))

    def test_whiten_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            MetricSpec.identity(3).whiten(np.ones(2))


class TestSSD:
    def test_zero_at_equal_points(self):
        assert ssd([1.0, 2.0], [1.0, 2.0], MetricSpec.identity(2)) == 0.0

    def test_sum_of_squares(self):
        assert ssd([1.0, -1.0], [0.0, 0.0], MetricSpec.identity(2)) == 2.0

    def test_scalar_variance(self):
        assert ssd([2.0], [0.0], MetricSpec(np.array([[4.0]]))) == pytest.approx(1.0, abs=1e-15)

    def test_matches_explicit_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            cov = random_spd(rng, n)
            lam, theta = rng.normal(size=n), rng.normal(size=n)
            diff = lam - theta
            expected = float(diff @ np.linalg.solve(cov, diff))
            assert ssd(lam, theta, MetricSpec(cov)) == pytest.approx(expected, rel=1e-11)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            ssd([1.0, 2.0], [1.0], MetricSpec.identity(2))


class TestDeviance:
    def test_poisson_hand_value(self):
        expected = 2.0 * (1.0 * math.log(0.5) + 3.0 * math.log(1.5))
        assert deviance([2.0, 2.0], [1.0, 3.0], GlmFamily.poisson()) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(1.0465, abs=5e-5)

    def test_zero_when_equal(self):
        assert deviance([0.3, 0.6], [0.3, 0.6], GlmFamily.binomial([5, 7])) == 0.0

    def test_gaussian_is_ssd(self):
        fam = GlmFamily.gaussian(np.eye(2))
        assert deviance([0.0, 0.0], [1.0, -1.0], fam) == 2.0

    def test_zero_count_convention(self):
        # lambda_i = 0 contributes 2 * theta_i
        assert deviance([1.5], [0.0], GlmFamily.poisson()) == pytest.approx(3.0, rel=1e-15)

    def test_binomial_boundary_lambda(self):
        fam = GlmFamily.binomial([4])
        assert deviance([0.25], [1.0], fam) == pytest.approx(-2 * 4 * math.log(0.25), rel=1e-14)

    def test_theta_on_boundary_rejected(self):
        with pytest.raises(InvalidInputError):
            deviance([0.0, 1.0], [1.0, 1.0], GlmFamily.poisson())

    def test_poisson_asymmetric(self):
        fam = GlmFamily.poisson()
        a, b = np.array([1.0, 4.0]), np.array([2.5, 0.7])
        assert abs(deviance(a, b, fam) - deviance(b, a, fam)) > 1e-3

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.01, 50), st.floats(0.01, 50)), min_size=1, max_size=6))
    def test_poisson_nonnegative_and_matches_kl(self, pairs):
        theta = np.array([p[0] for p in pairs])
        lam = np.array([p[1] for p in pairs])
        d = deviance(theta, lam, GlmFamily.poisson())
        # twice the Poisson KL divergence, written out term by term
        kl = sum(l * math.log(l / t) - l + t for t, l in zip(theta, lam))
        assert d >= 0.0
        assert d == pytest.approx(2.0 * kl, rel=1e-9, abs=1e-12)


class TestProjectInterval:
    @pytest.mark.parametrize(
        "x, lo, hi, expected",
        [(2.5, -1, 1, 1.0), (0.0, -1, 1, 0.0), (-3.0, -1, math.inf, -1.0), (5.0, -math.inf, 2, 2.0)],
    )
    def test_clamp(self, x, lo, hi, expected):
        assert project_interval(x, lo, hi) == expected

    def test_empty_interval(self):
        with pytest.raises(InvalidInputError):
            project_interval(0.0, 1.0, -1.0)

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(-100, 100),
        st.floats(-50, 50),
        st.floats(0, 50),
        st.floats(0, 20),
        st.floats(0, 20),
    )
    def test_nested_intervals_give_larger_distance(self, x, a, w, left, right):
        inner_lo, inner_hi = a, a + w
        outer_lo, outer_hi = inner_lo - left, inner_hi + right
        d_inner = abs(x - project_interval(x, inner_lo, inner_hi))
        d_outer = abs(x - project_interval(x, outer_lo, outer_hi))
        assert d_inner >= d_outer


class TestProjectLinear:
    def test_mean_projection(self):
        r = project_linear([1.0, -1.0], np.ones((2, 1)), MetricSpec.identity(2))
        np.testing.assert_allclose(r.minimizer, [0.0, 0.0], atol=1e-15)
        assert r.value == pytest.approx(2.0)

    def test_hand_normal_equations(self):
        r = project_linear([1.0, 3.0], np.ones((2, 1)), MetricSpec(np.array([1.0, 1.0])))
        np.testing.assert_allclose(r.minimizer, [2.0, 2.0])
        assert r.value == pytest.approx(2.0)

    def test_y_in_span(self):
        x = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
        y = x @ np.array([0.5, -2.0])
        r = project_linear(y, x, MetricSpec.identity(3))
        assert r.value == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_allclose(r.minimizer, y, atol=1e-13)

    def test_rank_deficient(self):
        x = np.array([[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]])
        with pytest.raises(SingularError):
            project_linear([1.0, 2.0, 3.0], x, MetricSpec.identity(3))

    def test_matches_gls_normal_equations(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = int(rng.integers(3, 8))
            k = int(rng.integers(1, n))
            x = rng.normal(size=(n, k))
            cov = random_spd(rng, n)
            y = rng.normal(size=n)
            ci = np.linalg.inv(cov)
            beta = np.linalg.solve(x.T @ ci @ x, x.T @ ci @ y)
            r = project_linear(y, x, MetricSpec(cov))
            np.testing.assert_allclose(r.coefficients, beta, rtol=1e-9, atol=1e-11)
            # residual is metric-orthogonal to the span
            np.testing.assert_allclose(x.T @ ci @ (y - r.minimizer), 0.0, atol=1e-10)

    def test_nested_spans_give_larger_distance(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            n = int(rng.integers(3, 9))
            k_a = int(rng.integers(2, n + 1))
            x_a = rng.normal(size=(n, k_a))
            x_m = x_a[:, : int(rng.integers(1, k_a))]
            metric = MetricSpec(random_spd(rng, n))
            y = rng.normal(size=n)
            assert project_linear(y, x_m, metric).value >= project_linear(y, x_a, metric).value - 1e-10


class TestColumnSpace:
    def test_contains(self):
        a = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
        assert column_space_contains(a, a[:, :1])
        assert column_space_contains(a, a @ np.array([[2.0], [-1.0]]))
        assert not column_space_contains(a[:, :1], a)
