import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evscore.errors import ConvergenceError, DomainError, PoleError
from evscore.specfun import (
    EULER_GAMMA,
    SeriesConfig,
    ei_continued_fraction,
    ei_series,
    exponential_integral_ei,
    gamma_fn,
    log_gamma,
    lower_incomplete_gamma,
    upper_incomplete_gamma,
)


def rel(a, b):
    return abs(a - b) / abs(b)


class TestGamma:
    def test_integer_and_half(self):
        assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-14)
        assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)

    def test_against_quadrature(self, oracle):
        assert rel(gamma_fn(1.5), oracle["gamma_1_5"]) < 1e-12

    @pytest.mark.parametrize("a", [0.0, -1.0, -2.0, -7.0])
    def test_poles(self, a):
        with pytest.raises(PoleError):
            gamma_fn(a)

    def test_reflection_region(self):
        assert rel(gamma_fn(-0.5), -2 * math.sqrt(math.pi)) < 1e-12

    def test_matches_math_gamma_on_grid(self):
        a = np.linspace(0.01, 50, 2001)
        ref = np.array([math.gamma(x) for x in a])
        assert np.max(np.abs(gamma_fn(a) / ref - 1)) < 1e-12

    def test_log_gamma(self):
        for a in (0.1, 1.0, 3.3, 170.5):
            assert log_gamma(a) == pytest.approx(math.lgamma(a), rel=1e-13, abs=1e-13)
        with pytest.raises(DomainError):
            log_gamma(0.0)

    @given(st.floats(0.001, 10.0))
    def test_recurrence(self, a):
        assert rel(gamma_fn(a + 1), a * gamma_fn(a)) < 1e-12

    def test_scalar_in_scalar_out(self):
        assert isinstance(gamma_fn(2.5), float)
        assert gamma_fn(np.array([2.5])).shape == (1,)


class TestIncompleteGamma:
    def test_trivial_values(self):
        assert upper_incomplete_gamma(1.0, 0.0) == pytest.approx(1.0, rel=1e-14)
        assert upper_incomplete_gamma(1.0, 2.0) == pytest.approx(math.exp(-2.0), rel=1e-13)
        assert lower_incomplete_gamma(1.0, 0.0) == 0.0
        assert lower_incomplete_gamma(1.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-13)

    def test_against_quadrature(self, oracle):
        assert rel(upper_incomplete_gamma(0.7, 1.3), oracle["upper_gamma_0_7_1_3"]) < 1e-10
        assert rel(lower_incomplete_gamma(1.5, 0.5), oracle["lower_gamma_1_5_0_5"]) < 1e-10

    def test_infinite_x(self):
        assert upper_incomplete_gamma(0.4, np.inf) == 0.0
        assert rel(lower_incomplete_gamma(0.4, np.inf), gamma_fn(0.4)) < 1e-14

    def test_negative_x_rejected(self):
        with pytest.raises(DomainError):
            upper_incomplete_gamma(1.0, -0.1)
        with pytest.raises(DomainError):
            lower_incomplete_gamma(1.0, -0.1)

    def test_nonpositive_a_rejected(self):
        with pytest.raises(DomainError):
            upper_incomplete_gamma(0.0, 1.0)

    @given(st.floats(1e-3, 5.0), st.floats(0.0, 50.0))
    def test_sum_identity(self, a, x):
        total = lower_incomplete_gamma(a, x) + upper_incomplete_gamma(a, x)
        assert rel(total, gamma_fn(a)) < 1e-12

    @pytest.mark.parametrize("a", [0.05, 0.5, 1.0, 1.5, 3.0, 5.0])
    def test_monotone_on_grid(self, a):
        x = np.linspace(0, 50, 4001)
        up = upper_incomplete_gamma(a, x)
        lo = lower_incomplete_gamma(a, x)
        assert np.all(np.diff(up) <= 1e-15)
        assert np.all(np.diff(lo) >= -1e-15)

    def test_vectorised_matches_scalar(self):
        a = np.array([0.3, 0.9, 1.5])
        x = np.array([0.2, 2.0, 7.0])
        vec = upper_incomplete_gamma(a, x)
        assert np.allclose(vec, [upper_incomplete_gamma(ai, xi) for ai, xi in zip(a, x)], rtol=0, atol=0)

    def test_term_budget_exhaustion(self):
        with pytest.raises(ConvergenceError):
            lower_incomplete_gamma(0.5, 1.0, SeriesConfig(max_terms=2))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SeriesConfig(abs_tolerance=0.0)
        with pytest.raises(ValueError):
            SeriesConfig(max_terms=0)


class TestEi:
    def test_limit(self):
        assert abs(exponential_integral_ei(-700.0)) < 1e-300
        assert exponential_integral_ei(-np.inf) == 0.0

    def test_against_quadrature(self, oracle):
        assert abs(exponential_integral_ei(-1.0) - oracle["ei_minus_1"]) < 1e-10

    def test_small_argument_two_schemes(self, oracle):
        s = ei_series(-1e-6)
        assert s == pytest.approx(EULER_GAMMA + math.log(1e-6) - 1e-6, abs=1e-12)
        assert abs(s - oracle["ei_minus_1e-6"]) < 1e-10
        assert exponential_integral_ei(-1e-6) == s
        # near zero the continued fraction stalls and must say so
        with pytest.raises(ConvergenceError):
            ei_continued_fraction(-1e-6, SeriesConfig(max_terms=200000))

    def test_switchover_overlap(self):
        x = np.linspace(-8.0, -2.0, 61)
        assert np.max(np.abs(ei_series(x) - ei_continued_fraction(x))) < 1e-10

    @pytest.mark.parametrize("x", [0.0, 0.5])
    def test_domain(self, x):
        with pytest.raises(DomainError):
            exponential_integral_ei(x)

    def test_strictly_decreasing_and_negative(self):
        x = -np.logspace(-8, 2.5, 3000)[::-1]
        e = exponential_integral_ei(x)
        assert np.all(np.diff(e) < 0)
        assert np.all(e < 0)

    @given(st.floats(-40.0, -1e-8))
    def test_matches_scipy(self, x):
        from scipy.special import expi

        assert exponential_integral_ei(x) == pytest.approx(expi(x), rel=1e-12, abs=1e-300)

    def test_non_convergence_signal(self):
        with pytest.raises(ConvergenceError):
            exponential_integral_ei(-3.0, SeriesConfig(max_terms=3))


def test_continued_fraction_refuses_near_zero():
    with pytest.raises(ConvergenceError):
        ei_continued_fraction(-1e-3)
    assert ei_continued_fraction(-0.05, SeriesConfig(max_terms=100000)) == pytest.approx(float(mpmath.ei(-0.05)), abs=1e-12)
