"""Calibration and sharpness diagnostics for probabilistic forecasts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DomainError
from .scoring import ForecastCase

REFERENCES = ("gumbel", "exponential")


@dataclass(frozen=True)
class PitSet:
    """PIT values ``F_i(y_i)`` with the ids of the cases they came from."""

    values: np.ndarray
    case_ids: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any((v < 0) | (v > 1)) or np.any(np.isnan(v)):
            raise DomainError("PIT values must lie in [0, 1]")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "case_ids", tuple(self.case_ids))
        if len(self.case_ids) != v.size:
            raise DomainError("values and case_ids differ in length")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class ResidualQuantileData:
    """Points of a residual quantile plot and its 95% bootstrap envelope."""

    model_quantiles: np.ndarray
    empirical_quantiles: np.ndarray
    band_lower: np.ndarray
    band_upper: np.ndarray
    reference: str

    def fraction_inside(self) -> float:
        inside = (self.empirical_quantiles >= self.band_lower) & (self.empirical_quantiles <= self.band_upper)
        return float(np.mean(inside))


def pit(cases: Sequence[ForecastCase]) -> PitSet:
    vals = [float(c.forecast.cdf(c.observation)) for c in cases]
    ids = [c.case_id if c.case_id is not None else i for i, c in enumerate(cases)]
    return PitSet(np.asarray(vals, dtype=float), ids)


def pit_histogram(p: PitSet, bins: int = 10) -> np.ndarray:
    """Equal-width bin counts on [0, 1]; the last bin is closed on the right."""
    if bins < 2:
        raise DomainError("need at least two bins")
    idx = np.minimum((p.values * bins).astype(int), bins - 1)
    return np.bincount(idx, minlength=bins)


def reference_inverse(reference: str) -> Callable[[np.ndarray], np.ndarray]:
    """Inverse cdf of the standard Gumbel or standard exponential."""
    if reference == "gumbel":
        return lambda u: -np.log(-np.log(u))
    if reference == "exponential":
        return lambda u: -np.log1p(-u)
    raise DomainError(f"reference must be one of {REFERENCES}")


def residual_quantile_data(p: PitSet, reference: str = "gumbel", replicates: int = 1000, seed: int = 0):
    """Sorted transformed PITs against transformed plotting positions ``i/(n+1)``.

    The envelope is the pointwise 2.5/97.5 percentile of each order statistic
    over ``replicates`` sets of ``n`` standard uniforms pushed through the same
    transform.
    """
    n = len(p)
    if n < 10:
        raise DomainError("residual quantile plot needs at least 10 PIT values")
    if replicates < 1:
        raise DomainError("need at least one bootstrap replicate")
    g_inv = reference_inverse(reference)
    positions = np.arange(1, n + 1) / (n + 1.0)
    with np.errstate(divide="ignore"):
        empirical = g_inv(np.sort(p.values))
        rng = np.random.default_rng(seed)
        lower = np.empty(n)
        upper = np.empty(n)
        sims = np.sort(rng.random((replicates, n)), axis=1)
        sims[sims == 0.0] = np.nextafter(0.0, 1.0)
        lo, hi = np.percentile(g_inv(sims), [2.5, 97.5], axis=0)
        lower[:], upper[:] = lo, hi
    return ResidualQuantileData(g_inv(positions), empirical, lower, upper, reference)


def stratify(cases: Sequence[ForecastCase], selector: Callable[[Mapping[str, float]], bool]):
    """Split cases by a predicate that only ever sees each case's covariates."""
    subset, complement = [], []
    for c in cases:
        (subset if selector(dict(c.covariates)) else complement).append(c)
    return subset, complement


def quantile_selector(cases: Sequence[ForecastCase], covariate: str, q: float, below: bool = True):
    """Selector for ``covariate <= its q-quantile`` over ``cases`` (or above)."""
    cut = float(np.quantile([c.covariates[covariate] for c in cases], q))
    if below:
        return lambda cov: cov[covariate] <= cut
    return lambda cov: cov[covariate] > cut


def predictive_sd(forecast, n_sample: int = 100_000, seed: int = 0) -> float:
    """Analytic predictive sd where available, otherwise from a large sample."""
    var_fn = getattr(forecast, "variance", None)
    if var_fn is not None:
        var = var_fn()
    else:
        var = float(np.var(forecast.sample(n_sample, seed), ddof=1))
    var = float(np.asarray(var))
    if not math.isfinite(var):
        raise DomainError("forecast has infinite variance (GEV shape >= 1/2)")
    return math.sqrt(var)


def sharpness(cases: Sequence[ForecastCase]) -> tuple[float, float]:
    """Mean predictive sd over cases and the sd of those sds."""
    if not cases:
        raise DomainError("no cases")
    sds = np.array([predictive_sd(c.forecast) for c in cases])
    spread = float(np.std(sds, ddof=1)) if sds.size > 1 else 0.0
    return float(np.mean(sds)), spread


def interval_width(cases: Sequence[ForecastCase], coverage: float = 0.9) -> float:
    """Average width of central prediction intervals at ``coverage``."""
    if not 0 < coverage < 1:
        raise DomainError("coverage must lie in (0, 1)")
    a = (1.0 - coverage) / 2.0
    widths = [float(c.forecast.quantile(1.0 - a)) - float(c.forecast.quantile(a)) for c in cases]
    return float(np.mean(widths))
