"""GEV and GPD kernels: cdf, density, quantile function, median and sampling.

Parameters may be numpy arrays (broadcast against the evaluation points) so a
whole non-stationary forecast set can be evaluated in one call.  Shapes with
``|xi| < XI_ZERO_TOL`` use the Gumbel / exponential formulas.  Points outside
the support give cdf 0 or 1 and density 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .specfun import EULER_GAMMA, gamma_fn

XI_ZERO_TOL = 1e-8


def _as_float(x):
    if np.ndim(x) == 0:
        return float(x)
    return np.asarray(x, dtype=float)


def _ret(out):
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GevParams:
    """Location ``mu``, scale ``sigma`` and shape ``xi`` of a GEV."""

    mu: float
    sigma: float
    xi: float

    def __post_init__(self):
        for name in ("mu", "sigma", "xi"):
            object.__setattr__(self, name, _as_float(getattr(self, name)))
        if not np.all(np.asarray(self.sigma) > 0):
            raise DomainError("GEV scale must be positive")

    def cdf(self, y):
        return gev_cdf(self, y)

    def pdf(self, y):
        return gev_pdf(self, y)

    def quantile(self, tau):
        return gev_quantile(self, tau)

    def median(self):
        return gev_median(self)

    def sample(self, n, rng_seed):
        return gev_sample(self, n, rng_seed)

    def mean(self):
        return gev_mean(self)

    def variance(self):
        return gev_variance(self)

    def endpoints(self):
        """(lower, upper) support endpoints; infinite where unbounded."""
        mu, sigma, xi = np.broadcast_arrays(*map(np.asarray, (self.mu, self.sigma, self.xi)))
        with np.errstate(divide="ignore", invalid="ignore"):
            edge = mu - sigma / xi
        lower = np.where(xi > XI_ZERO_TOL, edge, -np.inf)
        upper = np.where(xi < -XI_ZERO_TOL, edge, np.inf)
        return _ret(lower), _ret(upper)


@dataclass(frozen=True)
class GpdParams:
    """Threshold ``u``, scale ``sigma_u`` and shape ``xi`` of a GPD."""

    u: float
    sigma_u: float
    xi: float

    def __post_init__(self):
        for name in ("u", "sigma_u", "xi"):
            object.__setattr__(self, name, _as_float(getattr(self, name)))
        if not np.all(np.asarray(self.sigma_u) > 0):
            raise DomainError("GPD scale must be positive")

    def cdf(self, y):
        return gpd_cdf(self, y)

    def pdf(self, y):
        return gpd_pdf(self, y)

    def quantile(self, tau):
        return gpd_quantile(self, tau)

    def median(self):
        return gpd_quantile(self, 0.5)

    def sample(self, n, rng_seed):
        return gpd_sample(self, n, rng_seed)

    def mean(self):
        xi = np.asarray(self.xi)
        if np.any(xi >= 1):
            return np.inf
        return _ret(self.u + self.sigma_u / (1.0 - xi))

    def variance(self):
        xi = np.asarray(self.xi)
        if np.any(xi >= 0.5):
            return np.inf
        return _ret(self.sigma_u**2 / ((1.0 - xi) ** 2 * (1.0 - 2.0 * xi)))


def _reduced(z, xi):
    """Return (t, inside) with t = log(1 + xi z) / xi (or z when xi ~ 0).

    Outside the support t is -inf below a lower endpoint and +inf beyond an
    upper endpoint, which makes the cdf/survival formulas come out right.
    """
    z, xi = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(xi, dtype=float))
    small = np.abs(xi) < XI_ZERO_TOL
    xi_safe = np.where(small, 1.0, xi)
    arg = xi_safe * z
    inside = small | (arg > -1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(small, z, np.log1p(np.where(inside, arg, 0.0)) / xi_safe)
    t = np.where(inside, t, np.where(xi > 0, -np.inf, np.inf))
    return t, inside


def _branch_xi(xi):
    """Shape as the density sees it: exactly zero on the Gumbel branch."""
    xi = np.asarray(xi, dtype=float)
    return np.where(np.abs(xi) < XI_ZERO_TOL, 0.0, xi)


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~((tau > 0) & (tau < 1))):
        raise DomainError("probability level must lie in the open interval (0, 1)")
    return tau


def _quantile_core(w, xi):
    # x(w) = (w^-xi - 1) / xi, with x -> -log w as xi -> 0; w = -log tau (GEV) or 1 - tau (GPD)
    w, xi = np.broadcast_arrays(w, np.asarray(xi, dtype=float))
    small = np.abs(xi) < XI_ZERO_TOL
    xi_safe = np.where(small, 1.0, xi)
    lw = np.log(w)
    return np.where(small, -lw, np.expm1(-xi_safe * lw) / xi_safe)


def gev_cdf(p: GevParams, y):
    """GEV distribution function."""
    t, _ = _reduced((np.asarray(y, dtype=float) - p.mu) / p.sigma, p.xi)
    with np.errstate(over="ignore"):  # far lower tail: exp(-inf) = 0 is right
        return _ret(np.exp(-np.exp(-t)))


def gev_pdf(p: GevParams, y):
    """GEV density; zero outside the support."""
    t, inside = _reduced((np.asarray(y, dtype=float) - p.mu) / p.sigma, p.xi)
    with np.errstate(over="ignore", invalid="ignore"):
        dens = np.exp(-(1.0 + _branch_xi(p.xi)) * t - np.exp(-t)) / p.sigma
    return _ret(np.where(inside & np.isfinite(t), dens, 0.0))


def gev_logpdf(p: GevParams, y):
    """Log density, ``-inf`` outside the support."""
    t, inside = _reduced((np.asarray(y, dtype=float) - p.mu) / p.sigma, p.xi)
    with np.errstate(over="ignore", invalid="ignore"):
        logd = -(1.0 + _branch_xi(p.xi)) * t - np.exp(-t) - np.log(p.sigma)
    return _ret(np.where(inside & np.isfinite(t), logd, -np.inf))


def gev_quantile(p: GevParams, tau):
    """GEV quantile function ``mu - sigma/xi (1 - (-log tau)^-xi)``."""
    tau = _check_tau(tau)
    return _ret(p.mu + p.sigma * _quantile_core(-np.log(tau), p.xi))


def gev_median(p: GevParams):
    """Median ``mu + sigma/xi ((log 2)^-xi - 1)``; ``mu - sigma log log 2`` for xi = 0."""
    return _ret(p.mu + p.sigma * _quantile_core(np.full(np.shape(p.xi), math.log(2.0)), p.xi))


def gev_mode(p: GevParams):
    """Mode ``mu + sigma ((1 + xi)^-xi - 1) / xi`` (``mu`` for xi = 0); needs xi > -1."""
    xi = np.asarray(p.xi, dtype=float)
    small = np.abs(xi) < XI_ZERO_TOL
    xi_safe = np.where(small, 1.0, xi)
    step = np.where(small, 0.0, np.expm1(-xi_safe * np.log1p(xi_safe)) / xi_safe)
    return _ret(p.mu + p.sigma * step)


def gev_mean(p: GevParams):
    """Mean; infinite for xi >= 1."""
    xi = np.asarray(p.xi, dtype=float)
    if np.any(xi >= 1):
        return np.inf
    small = np.abs(xi) < XI_ZERO_TOL
    xi_safe = np.where(small, 0.5, xi)
    g1 = np.asarray(gamma_fn(1.0 - xi_safe))
    return _ret(p.mu + p.sigma * np.where(small, EULER_GAMMA, (g1 - 1.0) / xi_safe))


def gev_variance(p: GevParams):
    """Variance; infinite for xi >= 1/2."""
    xi = np.asarray(p.xi, dtype=float)
    if np.any(xi >= 0.5):
        return np.inf
    # (g2 - g1^2) / xi^2 cancels badly near 0; the Gumbel value is O(xi) away
    small = np.abs(xi) < 1e-5
    xi_safe = np.where(small, 0.25, xi)
    g1 = np.asarray(gamma_fn(1.0 - xi_safe))
    g2 = np.asarray(gamma_fn(1.0 - 2.0 * xi_safe))
    gumbel = math.pi**2 / 6.0
    return _ret(np.asarray(p.sigma) ** 2 * np.where(small, gumbel, (g2 - g1**2) / xi_safe**2))


def gpd_cdf(p: GpdParams, y):
    """GPD distribution function; 0 below the threshold."""
    z = (np.asarray(y, dtype=float) - p.u) / p.sigma_u
    t, _ = _reduced(np.maximum(z, 0.0), p.xi)
    return _ret(np.where(z < 0, 0.0, -np.expm1(-t)))


def gpd_pdf(p: GpdParams, y):
    """GPD density; zero outside the support."""
    z = (np.asarray(y, dtype=float) - p.u) / p.sigma_u
    t, inside = _reduced(np.maximum(z, 0.0), p.xi)
    with np.errstate(over="ignore", invalid="ignore"):
        dens = np.exp(-(1.0 + np.asarray(p.xi)) * t) / p.sigma_u
    return _ret(np.where((z >= 0) & inside & np.isfinite(t), dens, 0.0))


def gpd_quantile(p: GpdParams, tau):
    """GPD quantile function ``u + sigma_u ((1 - tau)^-xi - 1) / xi``."""
    tau = _check_tau(tau)
    return _ret(p.u + p.sigma_u * _quantile_core(1.0 - tau, p.xi))


def uniform_draws(n, rng_seed):
    """``n`` uniforms on (0, 1) from a seeded PCG64 generator."""
    if n < 1:
        raise DomainError("sample size must be at least 1")
    u = np.random.default_rng(rng_seed).random(n)
    # random() is on [0, 1); zero would break the quantile transform
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    return u


def gev_sample(p: GevParams, n, rng_seed):
    """Inverse-transform sample of size ``n``; deterministic in ``rng_seed``."""
    return np.asarray(gev_quantile(p, uniform_draws(n, rng_seed)))


def gpd_sample(p: GpdParams, n, rng_seed):
    """Inverse-transform sample of size ``n``; deterministic in ``rng_seed``."""
    return np.asarray(gpd_quantile(p, uniform_draws(n, rng_seed)))
