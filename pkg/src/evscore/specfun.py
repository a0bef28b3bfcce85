"""Special functions behind the closed-form CRPS of the GEV and GPD.

Everything here is vectorised over numpy arrays and works in double
precision.  The gamma function uses a Lanczos approximation, the incomplete
gamma functions use the usual series / continued-fraction split at
``x = a + 1``, and the exponential integral ``Ei`` (negative arguments only)
switches from its power series to the continued fraction of ``E1`` at
``x = -5``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConvergenceError, DomainError, PoleError

EULER_GAMMA = 0.57721566490153286060651209008240243

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Boundary between the Ei power series and the E1 continued fraction.
EI_SWITCH = -5.0

_TINY = 1e-300


@dataclass(frozen=True)
class SeriesConfig:
    """Convergence controls for the series and continued fractions."""

    abs_tolerance: float = 1e-14
    max_terms: int = 500

    def __post_init__(self):
        if not self.abs_tolerance > 0:
            raise ValueError("abs_tolerance must be positive")
        if self.max_terms < 1:
            raise ValueError("max_terms must be at least 1")


DEFAULT_SERIES = SeriesConfig()


def _scalar_or_array(out, *inputs):
    if all(np.ndim(x) == 0 for x in inputs):
        return float(np.asarray(out).reshape(-1)[0])
    return out


def _lanczos_sum(a):
    # a >= 0.5 assumed; evaluates A_g(a - 1)
    x = a - 1.0
    s = np.full_like(x, _LANCZOS_COEF[0])
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        s = s + c / (x + i)
    return x, s


def _gamma_positive(a):
    x, s = _lanczos_sum(a)
    t = x + _LANCZOS_G + 0.5
    # t**(x+0.5) * exp(-t) split in two to postpone overflow
    half = np.power(t, 0.5 * (x + 0.5))
    return math.sqrt(2.0 * math.pi) * half * (half * np.exp(-t)) * s


def gamma_fn(a):
    """Gamma function for real arguments.

    Raises
    ------
    PoleError
        If any argument is 0 or a negative integer.
    """
    a_arr = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any((a_arr <= 0) & (a_arr == np.floor(a_arr))):
        raise PoleError("gamma function has a pole at non-positive integers")
    out = np.empty_like(a_arr)
    hi = a_arr >= 0.5
    out[hi] = _gamma_positive(a_arr[hi])
    lo = ~hi
    if np.any(lo):
        al = a_arr[lo]
        # reflection formula
        out[lo] = math.pi / (np.sin(math.pi * al) * _gamma_positive(1.0 - al))
    return _scalar_or_array(out, a)


def log_gamma(a):
    """Natural log of the gamma function for positive arguments."""
    a_arr = np.atleast_1d(np.asarray(a, dtype=float))
    if np.any(a_arr <= 0):
        raise DomainError("log_gamma requires a > 0")
    out = np.empty_like(a_arr)
    hi = a_arr >= 0.5
    x, s = _lanczos_sum(a_arr[hi])
    t = x + _LANCZOS_G + 0.5
    out[hi] = _HALF_LOG_2PI + (x + 0.5) * np.log(t) - t + np.log(s)
    lo = ~hi
    if np.any(lo):
        al = a_arr[lo]
        out[lo] = np.log(math.pi / np.sin(math.pi * al)) - log_gamma(1.0 - al)
    return _scalar_or_array(out, a)


def _check_incomplete_args(a, x):
    a_arr, x_arr = np.broadcast_arrays(
        np.atleast_1d(np.asarray(a, dtype=float)), np.atleast_1d(np.asarray(x, dtype=float))
    )
    if np.any(~(a_arr > 0)):
        raise DomainError("incomplete gamma requires a > 0")
    if np.any(x_arr < 0) or np.any(np.isnan(x_arr)):
        raise DomainError("incomplete gamma requires x >= 0")
    return a_arr.astype(float), x_arr.astype(float)


@njit(cache=True)
def _lower_series_scalar(a, x, tol, max_terms):
    # gamma_l(a, x) = x^a e^-x sum_n x^n / (a (a+1) ... (a+n)); use for x < a + 1
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(max_terms):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * tol:
            if x == 0.0:
                return 0.0, True
            return math.exp(a * math.log(x) - x) * total, True
    return math.nan, False


@njit(cache=True)
def _upper_cf_scalar(a, x, tol, max_terms):
    # Gamma_u(a, x) by modified Lentz; use for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, max_terms + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return math.exp(a * math.log(x) - x) * h, True
    return math.nan, False


@njit(cache=True)
def _incomplete_kernel(a, x, full, lower, upper, tol, max_terms):
    ok = True
    for i in range(x.size):
        ai = a[i]
        xi = x[i]
        if math.isinf(xi):
            lower[i] = full[i]
            upper[i] = 0.0
        elif xi < ai + 1.0:
            lo, good = _lower_series_scalar(ai, xi, tol, max_terms)
            ok = ok and good
            lower[i] = lo
            upper[i] = full[i] - lo
        else:
            up, good = _upper_cf_scalar(ai, xi, tol, max_terms)
            ok = ok and good
            upper[i] = up
            lower[i] = full[i] - up
    return ok


def _incomplete_pair(a, x, cfg):
    """Return (lower, upper) with each piece computed from its stable side."""
    full = np.asarray(gamma_fn(a), dtype=float).reshape(a.shape)
    lower = np.empty(x.size)
    upper = np.empty(x.size)
    ok = _incomplete_kernel(
        a.ravel(), x.ravel(), full.ravel(), lower, upper,
        cfg.abs_tolerance * 0.1, cfg.max_terms,
    )
    if not ok:
        raise ConvergenceError("incomplete gamma evaluation did not converge")
    return lower.reshape(x.shape), upper.reshape(x.shape)


def upper_incomplete_gamma(a, x, config: SeriesConfig = DEFAULT_SERIES):
    """Upper incomplete gamma ``Gamma_u(a, x) = int_x^inf t^(a-1) e^-t dt``.

    ``a`` must be positive and ``x`` non-negative (``x = inf`` gives 0).
    """
    a_arr, x_arr = _check_incomplete_args(a, x)
    _, upper = _incomplete_pair(a_arr, x_arr, config)
    return _scalar_or_array(upper, a, x)


def lower_incomplete_gamma(a, x, config: SeriesConfig = DEFAULT_SERIES):
    """Lower incomplete gamma ``Gamma_l(a, x) = int_0^x t^(a-1) e^-t dt``."""
    a_arr, x_arr = _check_incomplete_args(a, x)
    lower, _ = _incomplete_pair(a_arr, x_arr, config)
    return _scalar_or_array(lower, a, x)


@njit(cache=True)
def _ei_series_scalar(x, tol, max_terms):
    # Ei(x) = C + log|x| + sum_k x^k / (k k!)
    term = x
    total = x
    for k in range(2, max_terms + 2):
        term *= x / k
        inc = term / k
        total += inc
        if abs(inc) < tol:
            return EULER_GAMMA + math.log(abs(x)) + total, True
    return math.nan, False


@njit(cache=True)
def _e1_cf_scalar(z, tol, max_terms):
    # E1(z), z > 1, even continued fraction by modified Lentz
    b = z + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, max_terms + 1):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < tol:
            return h * math.exp(-z), True
    return math.nan, False


@njit(cache=True)
def _ei_kernel(x, out, mode, tol, max_terms):
    # mode 0: automatic switch, 1: series only, 2: continued fraction only
    ok = True
    for i in range(x.size):
        xi = x[i]
        if math.isinf(xi) and xi < 0:
            out[i] = 0.0
            continue
        if mode == 1 or (mode == 0 and xi > EI_SWITCH):
            v, good = _ei_series_scalar(xi, tol, max_terms)
        else:
            v, good = _e1_cf_scalar(-xi, tol, max_terms)
            v = -v
        ok = ok and good
        out[i] = v
    return ok


def _ei(x, mode, cfg):
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x_arr.size)
    if not _ei_kernel(x_arr.ravel(), out, mode, cfg.abs_tolerance * 0.1, cfg.max_terms):
        raise ConvergenceError("exponential integral did not converge within max_terms")
    return _scalar_or_array(out.reshape(x_arr.shape), x)


def ei_series(x, config: SeriesConfig = DEFAULT_SERIES):
    """Ei by its power series alone (any x != 0; accurate for |x| up to ~10)."""
    return _ei(x, 1, config)


CF_UPPER_LIMIT = -1e-2


def ei_continued_fraction(x, config: SeriesConfig = DEFAULT_SERIES):
    """Ei(x) = -E1(-x) by the continued fraction alone.

    For ``-0.01 < x < 0`` the Lentz iterates stall before reaching double
    precision and can pass the stopping test while still wrong by ~1e-5, so
    that range raises ``ConvergenceError`` instead of returning a bad value.
    """
    xa = np.asarray(x, dtype=float)
    if np.any((xa > CF_UPPER_LIMIT) & (xa < 0)):
        raise ConvergenceError("continued fraction is unreliable for -0.01 < x < 0")
    return _ei(x, 2, config)


def exponential_integral_ei(x, config: SeriesConfig = DEFAULT_SERIES):
    """Exponential integral ``Ei(x) = int_{-inf}^x e^t / t dt`` for ``x < 0``.

    ``x = -inf`` returns 0.

    Raises
    ------
    DomainError
        If any ``x >= 0`` (``x = 0`` is the logarithmic singularity).
    ConvergenceError
        If the series or continued fraction needs more than ``max_terms``.
    """
    if np.any(~(np.asarray(x, dtype=float) < 0)):
        raise DomainError("exponential_integral_ei is defined here for x < 0 only")
    return _ei(x, 0, config)
