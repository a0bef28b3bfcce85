import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from evscore.distributions import GevParams, GpdParams, gev_mode, gev_pdf, gev_sample
from evscore.errors import DomainError, ShapeRangeError
from evscore.scoring import (
    INFINITE_SCORE,
    ForecastCase,
    LogNormalGustForecast,
    SampleForecast,
    ScoreRule,
    bootstrap_summary,
    brier,
    crps,
    crps_gev,
    crps_gpd,
    crps_lognormal_gust,
    crps_normal,
    crps_quantile_repr,
    crps_sample,
    ignorance,
    mean_scores,
    quantile_score,
    skill_score,
)

SHAPES = [-0.5, -0.1, 0.0, 0.1, 0.5]


def brier_integral(forecast, y, lo, hi):
    """CRPS as the integral over thresholds of the Brier score, split at ``y``."""
    f = lambda u: float(brier(forecast, y, u))
    return quad(f, lo, y, limit=500)[0] + quad(f, y, hi, limit=500)[0]


class TestCrpsGev:
    def test_quadrature_example(self, oracle):
        assert crps_gev(GevParams(0, 1, 0.5), 1.0) == pytest.approx(oracle["crps_gev_0_1_0_5_y_1"], abs=1e-10)

    def test_grid_against_oracle(self, oracle):
        for xi, y, ref in oracle["crps_grid"]["gev"]:
            assert abs(crps_gev(GevParams(0, 1, xi), y) - ref) < 1e-9, (xi, y)

    def test_minimum_at_median(self):
        p = GevParams(0, 1, 0)
        y = np.round(np.arange(-5, 5.0005, 1e-3), 10)
        vals = crps_gev(p, y)
        med = -math.log(math.log(2))
        assert abs(y[np.argmin(vals)] - med) <= 1e-3

    def test_shape_range(self):
        with pytest.raises(ShapeRangeError):
            crps_gev(GevParams(0, 1, 1.0), 0.0)

    @pytest.mark.parametrize("xi", SHAPES)
    def test_quantile_representation(self, xi):
        p = GevParams(0.2, 1.4, xi)
        for y in (-2.0, 0.0, 1.0, 4.0):
            assert crps_gev(p, y) == pytest.approx(crps_quantile_repr(p, y, 2048), abs=1e-4)

    def test_outside_support(self):
        # below the lower endpoint the score grows with slope one
        p = GevParams(0, 1, 0.5)
        assert crps_gev(p, -4.0) - crps_gev(p, -3.0) == pytest.approx(1.0, abs=1e-12)
        q = GevParams(0, 1, -0.5)
        assert crps_gev(q, 6.0) - crps_gev(q, 5.0) == pytest.approx(1.0, abs=1e-12)

    def test_extreme_observations_finite(self):
        p = GevParams(0, 1, 0.0)
        v = crps_gev(p, np.array([-30.0, 40.0, 800.0]))
        assert np.all(np.isfinite(v)) and np.all(v > 0)

    def test_vectorised_parameters(self):
        mu = np.array([0.0, 1.0, 2.0])
        p = GevParams(mu, 1.0, 0.1)
        vec = crps_gev(p, 1.5)
        assert np.allclose(vec, [crps_gev(GevParams(m, 1.0, 0.1), 1.5) for m in mu], rtol=1e-14)

    @pytest.mark.parametrize("eps", [1e-7, -1e-7])
    def test_branch_continuity(self, eps):
        y = np.linspace(-2, 6, 41)
        assert np.max(np.abs(crps_gev(GevParams(0, 1, eps), y) - crps_gev(GevParams(0, 1, 0.0), y))) < 1e-5

    @given(st.floats(-0.95, 0.95), st.floats(-10, 30), st.floats(0.1, 5))
    def test_non_negative(self, xi, y, sigma):
        assert crps_gev(GevParams(0, sigma, xi), y) >= -1e-12

    @given(st.floats(-0.9, 0.9), st.floats(-3, 3), st.floats(0.2, 3), st.floats(-5, 5))
    def test_location_scale_equivariance(self, xi, mu, sigma, z):
        a = crps_gev(GevParams(mu, sigma, xi), mu + sigma * z)
        b = sigma * crps_gev(GevParams(0, 1, xi), z)
        # the general-shape formula cancels like eps/|xi| just above the switch
        tol = 1e-10 + (1e-14 / abs(xi) if xi else 0.0)
        assert a == pytest.approx(b, rel=1e-9, abs=tol)


class TestCrpsGpd:
    def test_examples(self, oracle):
        assert crps_gpd(GpdParams(0, 1, 0), 0.0) == pytest.approx(0.5, abs=1e-15)
        assert crps_gpd(GpdParams(0, 1, 0), 2.0) == pytest.approx(2 - (2 * (1 - math.exp(-2)) - 0.5), abs=1e-14)
        assert crps_gpd(GpdParams(1, 2, 0.4), 3.0) == pytest.approx(oracle["crps_gpd_1_2_0_4_y_3"], abs=1e-10)

    def test_grid_against_oracle(self, oracle):
        for xi, y, ref in oracle["crps_grid"]["gpd"]:
            assert abs(crps_gpd(GpdParams(0, 1, xi), y) - ref) < 1e-9, (xi, y)

    def test_below_threshold_is_linear(self):
        p = GpdParams(2, 1, 0.3)
        assert crps_gpd(p, 0.5) == pytest.approx(crps_gpd(p, 2.0) + 1.5, abs=1e-13)

    def test_quantile_representation(self):
        assert crps_quantile_repr(GpdParams(0, 1, 0), 0.0, 4096) == pytest.approx(0.5, abs=1e-4)
        for xi in SHAPES:
            p = GpdParams(0, 1.5, xi)
            for y in (-1.0, 0.3, 2.0, 5.0):
                assert crps_gpd(p, y) == pytest.approx(crps_quantile_repr(p, y), abs=1e-4)

    def test_shape_range(self):
        with pytest.raises(ShapeRangeError):
            crps_gpd(GpdParams(0, 1, 1.2), 0.0)

    @pytest.mark.parametrize("eps", [1e-7, -1e-7])
    def test_branch_continuity(self, eps):
        y = np.linspace(-1, 6, 36)
        assert np.max(np.abs(crps_gpd(GpdParams(0, 1, eps), y) - crps_gpd(GpdParams(0, 1, 0.0), y))) < 1e-5


class TestSampleCrps:
    def test_point_mass(self):
        c = np.full(10, 3.0)
        assert crps_sample(c, c, 3.0) == 0.0
        assert crps_sample(c, c, 5.5) == pytest.approx(2.5)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            crps_sample([1.0, 2.0], [1.0], 0.0)

    def test_converges_to_closed_form(self):
        p = GevParams(0, 1, 0.2)
        a = gev_sample(p, 1_000_000, 1)
        b = gev_sample(p, 1_000_000, 2)
        terms = np.abs(a - 0.7) - 0.5 * np.abs(a - b)
        se = terms.std(ddof=1) / math.sqrt(terms.size)
        assert abs(crps_sample(a, b, 0.7) - crps_gev(p, 0.7)) < 3 * se

    def test_sample_forecast(self):
        sf = SampleForecast(gev_sample(GevParams(0, 1, 0), 20_000, 4))
        assert sf.crps(0.3) == pytest.approx(crps_gev(GevParams(0, 1, 0), 0.3), abs=0.02)
        assert sf.cdf(100.0) == 1.0
        with pytest.raises(DomainError):
            SampleForecast([1.0])


class TestNormalAndLognormal:
    def test_normal_examples(self, oracle):
        assert crps_normal(0.0, 1.0, 0.0) == pytest.approx((math.sqrt(2) - 1) / math.sqrt(math.pi), rel=1e-14)
        assert crps_normal(0.0, 1.0, 1.0) == pytest.approx(oracle["crps_normal_0_1_y_1"], abs=1e-12)
        assert crps_normal(0.0, 2.0, 2.0) == pytest.approx(2 * crps_normal(0.0, 1.0, 1.0), rel=1e-14)
        with pytest.raises(DomainError):
            crps_normal(0.0, 0.0, 1.0)

    @pytest.mark.parametrize("y", [6.0, 9.0, 12.0, 20.0, 30.0])
    def test_lognormal_gust_matches_quadrature(self, y):
        fc = LogNormalGustForecast(8.0, 0.3, 0.4)
        f = lambda t: (fc.cdf(t) - (t >= y)) ** 2
        lo = max(y, 8.0)
        ref = quad(f, 8.0, lo, limit=400)[0] + quad(f, lo, np.inf, limit=400)[0]
        ref += max(8.0 - y, 0.0)
        assert crps_lognormal_gust(8.0, 0.3, 0.4, y) == pytest.approx(ref, abs=1e-7)

    def test_lognormal_gust_sample_oracle(self):
        fc = LogNormalGustForecast(6.0, -0.2, 0.5)
        s = fc.sample(2_000_000, 9)
        m = s.size // 2
        terms = np.abs(s[:m] - 11.0) - 0.5 * np.abs(s[:m] - s[m:])
        se = terms.std(ddof=1) / math.sqrt(m)
        assert abs(terms.mean() - fc.crps(11.0)) < 3 * se

    def test_log_scale_variant(self):
        fc = LogNormalGustForecast(8.0, 0.3, 0.4)
        assert fc.crps(12.0, scale="log") == pytest.approx(crps_normal(0.3, 0.4, math.log(12 / 8 - 1)))
        assert fc.crps(7.0, scale="log") == INFINITE_SCORE

    def test_ignorance_jacobian(self):
        fc = LogNormalGustForecast(8.0, 0.3, 0.4)
        y = 14.0
        zlog = math.log(y / 8 - 1)
        dens = math.exp(-0.5 * ((zlog - 0.3) / 0.4) ** 2) / (0.4 * math.sqrt(2 * math.pi))
        assert ignorance(fc, y) == pytest.approx(-math.log(dens / (y - 8.0)), rel=1e-12)
        assert ignorance(fc, 7.5) == INFINITE_SCORE


class TestOtherScores:
    def test_ignorance_examples(self, oracle):
        assert ignorance(GevParams(0, 1, 0), 0.0) == pytest.approx(1.0, rel=1e-15)
        assert ignorance(GevParams(0, 1, 0.5), -5.0) == INFINITE_SCORE
        assert ignorance(GevParams(2, 1.5, -0.2), 2.3) == pytest.approx(-math.log(oracle["gev_pdf_2_1_5_m0_2_y_2_3"]), rel=1e-11)

    def test_ignorance_gpd_and_sample(self):
        assert ignorance(GpdParams(0, 1, 0), 1.0) == pytest.approx(1.0, rel=1e-14)
        assert ignorance(GpdParams(0, 1, 0), -1.0) == INFINITE_SCORE
        sf = SampleForecast(gev_sample(GevParams(0, 1, 0), 50_000, 3))
        assert ignorance(sf, 0.0) == pytest.approx(1.0, abs=0.06)

    def test_brier_examples(self):
        p = GevParams(0, 1, 0)
        u = -math.log(math.log(2))  # F(u) = 0.5
        assert brier(p, u - 1, u) == pytest.approx(0.25)
        assert brier(GevParams(0, 1, 0.5), 3.0, -2.0) == 0.0
        assert brier(p, 2.0, 1.0) == pytest.approx((1 - math.exp(-math.exp(-1)) - 1) ** 2)

    def test_quantile_score_examples(self):
        p = GevParams(0, 1, 0)
        q = float(p.quantile(0.9))
        assert quantile_score(p, q, 0.9) == 0.0
        assert quantile_score(p, q + 2, 0.9) == pytest.approx(1.8)
        assert quantile_score(p, q - 2, 0.9) == pytest.approx(0.2)
        with pytest.raises(DomainError):
            quantile_score(p, 0.0, 1.0)

    def test_skill_score(self):
        assert skill_score(1.0, 1.0, 0.0) == 0.0
        assert skill_score(0.0, 1.0, 0.0) == 1.0
        assert skill_score(0.5, 1.0, 0.0) == 0.5
        with pytest.raises(DomainError):
            skill_score(0.5, 0.0, 0.0)

    def test_minimum_at_mode_for_ignorance(self):
        for xi in (-0.5, 0.0, 0.5):
            p = GevParams(0, 1, xi)
            y = np.arange(-3, 5, 1e-3)
            y = y[gev_pdf(p, y) > 0]
            best = y[np.argmin(ignorance(p, y))]
            assert abs(best - gev_mode(p)) <= 1e-3

    def test_brier_integral_reproduces_crps(self):
        for xi in (-0.5, 0.0, 0.5):
            p = GevParams(0, 1, xi)
            lo, hi = p.endpoints()
            for y in (-1.0, 0.37, 2.5):
                val = brier_integral(p, y, max(lo, -np.inf), hi)
                val += max(lo - y, 0.0) + max(y - hi, 0.0)
                assert val == pytest.approx(crps_gev(p, y), abs=1e-6)


class TestScoreRule:
    def test_parse(self):
        assert ScoreRule.parse("brier@14") == ScoreRule("brier", 14.0)
        assert ScoreRule.parse("qs@0.9").label == "quantile@0.9"
        assert ScoreRule.parse("ign").kind == "ignorance"
        with pytest.raises(ValueError):
            ScoreRule("energy")
        with pytest.raises(ValueError):
            ScoreRule("brier")

    def test_dispatch(self):
        p = GevParams(0, 1, 0.1)
        assert ScoreRule("crps")(p, 0.3) == crps(p, 0.3)
        assert ScoreRule("quantile", 0.5)(p, 0.3) == quantile_score(p, 0.3, 0.5)


class TestMeanScores:
    def test_single_case(self):
        case = ForecastCase(GevParams(0, 1, 0), 0.5)
        s = mean_scores([case], ScoreRule("crps"), 200, 1)
        assert s.mean_score == pytest.approx(crps_gev(GevParams(0, 1, 0), 0.5))
        assert s.bootstrap_sd == 0.0 and s.n_cases == 1

    def test_identical_cases(self):
        cases = [ForecastCase(GevParams(0, 1, 0), 0.5)] * 100
        assert mean_scores(cases, ScoreRule("crps"), 300, 1).bootstrap_sd == 0.0

    def test_empty(self):
        with pytest.raises(DomainError):
            mean_scores([], ScoreRule("crps"))

    def test_no_bootstrap(self):
        s = bootstrap_summary([1.0, 2.0], replicates=0)
        assert s.mean_score == 1.5 and math.isnan(s.bootstrap_sd)

    def test_infinite_scores_counted(self):
        cases = [ForecastCase(GevParams(0, 1, 0.5), -5.0), ForecastCase(GevParams(0, 1, 0.5), 1.0)]
        s = mean_scores(cases, ScoreRule("ignorance"), 50, 0)
        assert s.n_infinite == 1 and s.mean_score == math.inf

    def test_against_independent_resampler(self):
        rng = np.random.default_rng(11)
        values = rng.gamma(2.0, 0.5, 3104)
        s = bootstrap_summary(values, 1000, seed=5)
        # independent resampler: separate generator stream, plain loop
        rng2 = np.random.default_rng(12345)
        means = [values[rng2.integers(0, values.size, values.size)].mean() for _ in range(1000)]
        ref = float(np.std(means, ddof=1))
        analytic = values.std(ddof=0) / math.sqrt(values.size)
        assert s.bootstrap_sd == pytest.approx(ref, rel=0.1)
        assert s.bootstrap_sd == pytest.approx(analytic, rel=0.1)

    def test_deterministic(self):
        values = np.arange(50.0)
        assert bootstrap_summary(values, 100, 3) == bootstrap_summary(values, 100, 3)

    def test_summation_order_independent_of_chunking(self):
        values = np.random.default_rng(0).random(200)
        a = bootstrap_summary(values, 500, 9, chunk=500)
        b = bootstrap_summary(values, 500, 9, chunk=37)
        assert a.bootstrap_sd == b.bootstrap_sd


def _mc_crps(p, y, m, seed):
    a = p.sample(m, seed)
    b = p.sample(m, seed + 1)
    terms = np.abs(a - y) - 0.5 * np.abs(a - b)
    return terms.mean(), terms.std(ddof=1) / math.sqrt(m)


def test_monte_carlo_kernel_bounded_gev():
    est, se = _mc_crps(GevParams(0, 1, -0.5), 0.0, 10_000_000, 21)
    assert abs(est - crps_gev(GevParams(0, 1, -0.5), 0.0)) < 3 * se


@pytest.mark.parametrize("family", ["gev", "gpd"])
def test_monte_carlo_grid(oracle, family):
    # 50 comparisons at 3 SE each: a family-wise false alarm is possible but rare
    for k, (xi, y, ref) in enumerate(oracle["crps_grid"][family]):
        p = GevParams(0, 1, xi) if family == "gev" else GpdParams(0, 1, xi)
        est, se = _mc_crps(p, y, 400_000, 1000 + 2 * k)
        assert abs(est - ref) < 4 * se, (xi, y)


def test_quantile_score_median_minimum():
    p = GevParams(1, 2, 0.2)
    y = np.round(np.arange(-4, 8.0005, 1e-3), 10)
    vals = quantile_score(p, y, 0.5)
    assert abs(y[np.argmin(vals)] - float(p.median())) <= 1e-3


def test_sampled_propriety():
    truth = (0.0, 1.0, 0.1)
    y = GevParams(*truth).sample(100_000, 5)
    base = crps_gev(GevParams(*truth), y)
    for mu in (-0.1, 0.0, 0.1):
        for sigma in (0.9, 1.0, 1.1):
            for xi in (0.0, 0.1, 0.2):
                if (mu, sigma, xi) == truth:
                    continue
                diff = crps_gev(GevParams(mu, sigma, xi), y) - base
                se = diff.std(ddof=1) / math.sqrt(diff.size)
                assert diff.mean() > 3 * se, (mu, sigma, xi)
