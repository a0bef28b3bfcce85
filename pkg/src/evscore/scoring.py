"""Proper scoring rules for probabilistic forecasts.

Closed-form CRPS for the GEV and GPD, sample and quantile-integral CRPS
estimators, the normal CRPS, ignorance, Brier, quantile and skill scores,
and bootstrap summaries of mean scores.  All scores are negatively oriented.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .distributions import (
    XI_ZERO_TOL,
    GevParams,
    GpdParams,
    _reduced,
    gev_logpdf,
)
from .errors import DomainError, ShapeRangeError
from .specfun import EULER_GAMMA, exponential_integral_ei, gamma_fn, lower_incomplete_gamma

INFINITE_SCORE = math.inf

_LOG2 = math.log(2.0)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


def _ret(out):
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def _check_shape_below_one(xi):
    if np.any(np.asarray(xi) >= 1.0):
        raise ShapeRangeError("closed-form CRPS requires shape xi < 1 (finite mean)")


# --------------------------------------------------------------------------
# forecast types that are not plain GEV / GPD parameter sets


@dataclass(frozen=True)
class LogNormalGustForecast:
    """Peak-wind forecast ``y = ff * (1 + exp(Z))`` with ``Z ~ N(mean, sd^2)``.

    This is the predictive law implied by a normal model for the log gust
    factor ``log(y / ff - 1)``.
    """

    ff: float
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DomainError("log gust factor sd must be positive")
        if not self.ff > 0:
            raise DomainError("mean wind must be positive")

    def log_gust_factor(self, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(np.asarray(y, dtype=float) / self.ff - 1.0)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (self.log_gust_factor(np.maximum(y, self.ff * (1 + 1e-300))) - self.mean) / self.sd
        return _ret(np.where(y > self.ff, ndtr(z), 0.0))

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        above = y > self.ff
        ys = np.where(above, y, 2.0 * self.ff)
        z = (np.log(ys / self.ff - 1.0) - self.mean) / self.sd
        dens = np.exp(-0.5 * z * z) / (self.sd * math.sqrt(2 * math.pi) * (ys - self.ff))
        return _ret(np.where(above, dens, 0.0))

    def quantile(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(~((tau > 0) & (tau < 1))):
            raise DomainError("probability level must lie in (0, 1)")
        return _ret(self.ff * (1.0 + np.exp(self.mean + self.sd * ndtri(tau))))

    def median(self):
        return self.ff * (1.0 + math.exp(self.mean))

    def mean_value(self):
        return self.ff * (1.0 + math.exp(self.mean + 0.5 * self.sd**2))

    def variance(self):
        s2 = self.sd**2
        return self.ff**2 * math.expm1(s2) * math.exp(2 * self.mean + s2)

    def sample(self, n, rng_seed):
        rng = np.random.default_rng(rng_seed)
        return self.ff * (1.0 + np.exp(self.mean + self.sd * rng.standard_normal(n)))

    def crps(self, y, scale="wind"):
        if scale == "log":
            if y <= self.ff:
                return INFINITE_SCORE
            return crps_normal(self.mean, self.sd, float(self.log_gust_factor(y)))
        if scale != "wind":
            raise ValueError(f"unknown scale {scale!r}")
        return crps_lognormal_gust(self.ff, self.mean, self.sd, y)


@dataclass(frozen=True)
class SampleForecast:
    """Forecast represented by a (large) sample, e.g. a posterior predictive."""

    sample: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sample, dtype=float).ravel()
        if s.size < 2:
            raise DomainError("a sample forecast needs at least two members")
        object.__setattr__(self, "sample", s)

    def cdf(self, y):
        srt = self._sorted()
        return _ret(np.searchsorted(srt, np.asarray(y, dtype=float), side="right") / srt.size)

    def pdf(self, y):
        from .bayes import predictive_density_estimate

        return predictive_density_estimate(self.sample, y)

    def logpdf(self, y):
        from .bayes import predictive_log_density_estimate

        return predictive_log_density_estimate(self.sample, y)

    def quantile(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(~((tau > 0) & (tau < 1))):
            raise DomainError("probability level must lie in (0, 1)")
        return _ret(np.quantile(self.sample, tau))

    def median(self):
        return float(np.median(self.sample))

    def variance(self):
        return float(np.var(self.sample, ddof=1))

    def crps(self, y):
        m = self.sample.size // 2
        return crps_sample(self.sample[:m], self.sample[m : 2 * m], y)

    def _sorted(self):
        cached = self.__dict__.get("_sorted_cache")
        if cached is None:
            cached = np.sort(self.sample)
            object.__setattr__(self, "_sorted_cache", cached)
        return cached


@dataclass
class ForecastCase:
    """One predictive distribution paired with its verifying observation.

    ``covariates`` carries whatever the forecaster knew when issuing the
    forecast; it is what stratification selectors get to see.
    """

    forecast: Any
    observation: float
    case_id: Any = None
    covariates: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ScoreSummary:
    """Mean score with its bootstrap standard deviation."""

    mean_score: float
    bootstrap_sd: float
    n_cases: int
    n_infinite: int = 0


# --------------------------------------------------------------------------
# CRPS


def crps_gev(p: GevParams, y):
    """Closed-form CRPS of a GEV forecast.

    For xi != 0::

        (mu - y - s/xi)(1 - 2F(y)) - s/xi (2^xi G(1-xi) - 2 G_l(1-xi, -log F(y)))

    and for xi = 0::

        mu - y + s(C - log 2) - 2 s Ei(log F(y))

    Raises
    ------
    ShapeRangeError
        If ``xi >= 1`` (infinite mean, infinite CRPS).
    """
    _check_shape_below_one(p.xi)
    y = np.asarray(y, dtype=float)
    mu, sigma, xi, y = np.broadcast_arrays(
        np.asarray(p.mu, dtype=float), np.asarray(p.sigma, dtype=float), np.asarray(p.xi, dtype=float), y
    )
    z = (y - mu) / sigma
    t, _ = _reduced(z, xi)
    w = np.exp(-t)  # -log F(y), from +inf below a lower endpoint to 0 above an upper one
    cdf = np.exp(-w)
    out = np.empty(np.shape(y), dtype=float)

    small = np.abs(xi) < XI_ZERO_TOL
    if np.any(small):
        ws, zs = w[small], z[small]
        ei = np.empty_like(ws)
        pos = ws > 0
        ei[pos] = exponential_integral_ei(-ws[pos])
        # F(y) rounds to 1: Ei(-w) = C + log w + O(w) with log w = -z
        ei[~pos] = EULER_GAMMA - zs[~pos]
        out[small] = sigma[small] * (-zs + EULER_GAMMA - _LOG2 - 2.0 * ei)

    big = ~small
    if np.any(big):
        xb, sb = xi[big], sigma[big]
        a = 1.0 - xb
        g = np.asarray(gamma_fn(a))
        gl = np.asarray(lower_incomplete_gamma(a, w[big]))
        ratio = sb / xb
        out[big] = (mu[big] - y[big] - ratio) * (1.0 - 2.0 * cdf[big]) - ratio * (
            np.exp(xb * _LOG2) * g - 2.0 * gl
        )
    return _ret(out)


def crps_gpd(p: GpdParams, y):
    """Closed-form CRPS of a GPD forecast.

    Inside the support this is::

        (u - y - s/xi)(1 - 2F) - 2s/(xi(xi-1)) (1/(xi-2) + (1-F)(1 + xi (y-u)/s))

    (``y - u - s(2F - 1/2)`` for xi = 0).  Below the threshold the score
    grows linearly: ``CRPS(y) = CRPS(u) + (u - y)``.

    Raises
    ------
    ShapeRangeError
        If ``xi >= 1``.
    """
    _check_shape_below_one(p.xi)
    u, sigma, xi, y = np.broadcast_arrays(
        np.asarray(p.u, dtype=float),
        np.asarray(p.sigma_u, dtype=float),
        np.asarray(p.xi, dtype=float),
        np.asarray(y, dtype=float),
    )
    below = np.maximum(u - y, 0.0)
    z = np.maximum(y - u, 0.0) / sigma
    t, _ = _reduced(z, xi)
    cdf = -np.expm1(-t)
    out = np.empty(np.shape(y), dtype=float)

    small = np.abs(xi) < XI_ZERO_TOL
    if np.any(small):
        out[small] = sigma[small] * (z[small] - 2.0 * cdf[small] + 0.5)

    big = ~small
    if np.any(big):
        xb, sb, tb = xi[big], sigma[big], t[big]
        # (1 - F)(1 + xi z) = exp(-(1 - xi) t); 0 beyond an upper endpoint
        tail = np.exp(-(1.0 - xb) * tb)
        out[big] = (-sb * z[big] - sb / xb) * (1.0 - 2.0 * cdf[big]) - 2.0 * sb / (xb * (xb - 1.0)) * (
            1.0 / (xb - 2.0) + tail
        )
    return _ret(out + below)


def crps_sample(sample_a, sample_b, y):
    """CRPS estimate from two independent samples of the forecast.

    ``mean|x_i - y| - mean|x_i - x'_i| / 2``; unbiased for the true CRPS.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size != b.size:
        raise DomainError("samples must have the same length")
    if a.size == 0:
        raise DomainError("samples must not be empty")
    return float(np.mean(np.abs(a - y)) - 0.5 * np.mean(np.abs(a - b)))


def crps_normal(mean, sd, y):
    """CRPS of a normal forecast ``sd (z(2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi))``."""
    sd = np.asarray(sd, dtype=float)
    if np.any(~(sd > 0)):
        raise DomainError("normal CRPS requires sd > 0")
    z = (np.asarray(y, dtype=float) - mean) / sd
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return _ret(sd * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI))


def crps_lognormal(mean, sd, x):
    """CRPS of the lognormal law of ``exp(Z)``, ``Z ~ N(mean, sd^2)``; ``x <= 0`` allowed."""
    x = np.asarray(x, dtype=float)
    scale = np.exp(mean + 0.5 * sd * sd)
    ed = 2.0 * scale * (2.0 * ndtr(sd / math.sqrt(2.0)) - 1.0)  # E|X - X'|
    pos = x > 0
    with np.errstate(divide="ignore"):
        w = (np.log(np.where(pos, x, 1.0)) - mean) / sd
    # E|X - x| for x > 0, and E X - x otherwise
    e_abs_pos = x * (2.0 * ndtr(w) - 1.0) + scale * (1.0 - 2.0 * ndtr(w - sd))
    e_abs = np.where(pos, e_abs_pos, scale - x)
    return _ret(e_abs - 0.5 * ed)


def crps_lognormal_gust(ff, mean, sd, y):
    """Wind-scale CRPS of ``y = ff (1 + exp(Z))``: ``ff * CRPS_LN((y - ff) / ff)``."""
    return _ret(ff * np.asarray(crps_lognormal(mean, sd, (np.asarray(y, dtype=float) - ff) / ff)))


def crps(forecast, y):
    """CRPS of any supported forecast type."""
    if isinstance(forecast, GevParams):
        return crps_gev(forecast, y)
    if isinstance(forecast, GpdParams):
        return crps_gpd(forecast, y)
    return forecast.crps(y)


@functools.lru_cache(maxsize=32)
def _legendre_nodes(n):
    return np.polynomial.legendre.leggauss(n)


def _gauss_legendre(a, b, n):
    x, w = _legendre_nodes(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def crps_quantile_repr(forecast, y, n_nodes=2048):
    """CRPS as twice the integral of the quantile score over levels in (0, 1).

    Gauss-Legendre quadrature, split at ``F(y)`` where the integrand has a
    kink.  Works for any forecast with ``cdf`` and ``quantile`` methods.
    """
    if n_nodes < 16:
        raise DomainError("quantile-representation CRPS needs at least 16 nodes")
    split = float(forecast.cdf(y))
    if 0.0 < split < 1.0:
        n_left = max(8, int(round(n_nodes * split)))
        n_left = min(n_left, n_nodes - 8)
        pieces = [_gauss_legendre(0.0, split, n_left), _gauss_legendre(split, 1.0, n_nodes - n_left)]
    else:
        pieces = [_gauss_legendre(0.0, 1.0, n_nodes)]
    total = 0.0
    for tau, w in pieces:
        total += float(np.sum(w * _check_loss(y - np.asarray(forecast.quantile(tau)), tau)))
    return 2.0 * total


# --------------------------------------------------------------------------
# other scores


def _check_loss(u, tau):
    return np.where(u >= 0, tau * u, (tau - 1.0) * u)


def ignorance(forecast, y):
    """Logarithmic score ``-log f(y)``; ``INFINITE_SCORE`` where ``f(y) = 0``.

    For :class:`LogNormalGustForecast` this is the density of ``y`` itself,
    i.e. the normal density of ``log G`` divided by ``y - ff``.
    """
    if isinstance(forecast, GevParams):
        return _ret(-np.asarray(gev_logpdf(forecast, y)))
    if hasattr(forecast, "logpdf"):
        return _ret(-np.asarray(forecast.logpdf(y), dtype=float))
    dens = np.asarray(forecast.pdf(y), dtype=float)
    with np.errstate(divide="ignore"):
        return _ret(np.where(dens > 0, -np.log(np.where(dens > 0, dens, 1.0)), INFINITE_SCORE))


def brier(forecast, y, threshold):
    """Brier score for the event ``y >= threshold`` with ``p = 1 - F(threshold)``."""
    p = 1.0 - np.asarray(forecast.cdf(threshold), dtype=float)
    hit = (np.asarray(y, dtype=float) >= threshold).astype(float)
    return _ret((p - hit) ** 2)


def quantile_score(forecast, y, tau):
    """Check-function loss ``rho_tau(y - F^-1(tau))``."""
    if not 0.0 < tau < 1.0:
        raise DomainError("quantile level must lie in (0, 1)")
    q = np.asarray(forecast.quantile(tau), dtype=float)
    return _ret(_check_loss(np.asarray(y, dtype=float) - q, tau))


def skill_score(score, score_ref, score_perfect=0.0):
    """``(S - S_ref) / (S_perfect - S_ref)``: 0 for no gain, 1 for perfect."""
    denom = np.asarray(score_perfect, dtype=float) - np.asarray(score_ref, dtype=float)
    if np.any(denom == 0):
        raise DomainError("skill score undefined when the reference equals the perfect score")
    return _ret((np.asarray(score, dtype=float) - score_ref) / denom)


@dataclass(frozen=True)
class ScoreRule:
    """A named score with its parameter, callable as ``rule(forecast, y)``.

    ``kind`` is one of ``crps``, ``ignorance``, ``brier`` (``param`` is the
    threshold) or ``quantile`` (``param`` is the level).
    """

    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in ("crps", "ignorance", "brier", "quantile"):
            raise ValueError(f"unknown score rule {self.kind!r}")
        if self.kind in ("brier", "quantile") and self.param is None:
            raise ValueError(f"{self.kind} score needs a parameter")

    def __call__(self, forecast, y):
        if self.kind == "crps":
            return crps(forecast, y)
        if self.kind == "ignorance":
            return ignorance(forecast, y)
        if self.kind == "brier":
            return brier(forecast, y, self.param)
        return quantile_score(forecast, y, self.param)

    @property
    def label(self):
        if self.param is None:
            return self.kind
        return f"{self.kind}@{self.param:g}"

    @classmethod
    def parse(cls, text):
        """Parse ``crps``, ``ignorance``, ``brier@14`` or ``quantile@0.9``."""
        kind, _, param = text.partition("@")
        aliases = {"ign": "ignorance", "qs": "quantile", "bs": "brier"}
        kind = aliases.get(kind, kind)
        return cls(kind, float(param) if param else None)


def score_values(cases: Sequence[ForecastCase], rule: ScoreRule | Callable) -> np.ndarray:
    """Per-case scores, in case order."""
    if isinstance(rule, str):
        rule = ScoreRule.parse(rule)
    return np.array([float(rule(c.forecast, c.observation)) for c in cases], dtype=float)


def bootstrap_summary(values, replicates=1000, seed=0, chunk=200) -> ScoreSummary:
    """Mean of ``values`` and the sd of its bootstrap distribution.

    Cases are resampled with replacement ``replicates`` times from a PCG64
    generator seeded with ``seed``.  Infinite scores make the mean (and the
    bootstrap sd) infinite; ``replicates = 0`` gives a NaN sd.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n == 0:
        raise DomainError("cannot summarise an empty set of scores")
    n_inf = int(np.count_nonzero(np.isinf(values)))
    mean = float(np.mean(values))
    if replicates <= 0:
        return ScoreSummary(mean, math.nan, n, n_inf)
    if n_inf:
        return ScoreSummary(mean, math.inf, n, n_inf)
    rng = np.random.default_rng(seed)
    centred = values - mean  # identical scores then give an sd of exactly 0
    means = np.empty(replicates)
    for start in range(0, replicates, chunk):
        stop = min(start + chunk, replicates)
        idx = rng.integers(0, n, size=(stop - start, n))
        means[start:stop] = centred[idx].mean(axis=1)
    sd = float(np.std(means, ddof=1)) if replicates > 1 else 0.0
    return ScoreSummary(mean, sd, n, n_inf)


def mean_scores(cases, rule, replicates=1000, seed=0) -> ScoreSummary:
    """Average ``rule`` over ``cases`` with a case-resampling bootstrap sd."""
    if len(cases) == 0:
        raise DomainError("mean_scores needs at least one case")
    return bootstrap_summary(score_values(cases, rule), replicates=replicates, seed=seed)
