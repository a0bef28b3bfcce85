"""Lognormal gust-factor regression: ordinary least squares on log G, G = y/ff - 1."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError, RankDeficiencyError
from ..scoring import LogNormalGustForecast

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GlmFit:
    """Coefficients of ``E[log G] = b0 + b1 x1 + ...`` and the residual sd."""

    coeffs: np.ndarray
    covariates: tuple
    residual_sd: float
    std_errors: np.ndarray
    n_used: int
    n_dropped: int

    def to_dict(self):
        return {
            "coeffs": [float(c) for c in self.coeffs],
            "covariates": list(self.covariates),
            "residual_sd": self.residual_sd,
            "std_errors": [float(s) for s in self.std_errors],
            "n_used": self.n_used,
            "n_dropped": self.n_dropped,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["coeffs"], dtype=float),
            tuple(d["covariates"]),
            float(d["residual_sd"]),
            np.asarray(d["std_errors"], dtype=float),
            int(d["n_used"]),
            int(d["n_dropped"]),
        )


def glm_fit(y_fx, ff, covariates: Mapping[str, np.ndarray], names: Sequence[str] = ()) -> GlmFit:
    """OLS for log gust factor.  Rows with ``G <= 0`` are dropped and counted.

    ``ff`` is the raw mean wind; ``covariates`` may be normalised.

    Raises
    ------
    DataError
        If no rows survive.
    RankDeficiencyError
        If the design does not have full column rank.
    """
    y_fx = np.asarray(y_fx, dtype=float)
    ff = np.asarray(ff, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = y_fx / ff - 1.0
    keep = (ff > 0) & (g > 0) & np.isfinite(g)
    n_dropped = int(np.sum(~keep))
    if n_dropped:
        log.info("gust-factor regression: dropped %d rows with G <= 0", n_dropped)
    n = int(np.sum(keep))
    if n == 0:
        raise DataError("no rows with positive gust factor")
    x = np.column_stack([np.ones(n)] + [np.asarray(covariates[c], dtype=float)[keep] for c in names])
    if np.linalg.matrix_rank(x) < x.shape[1] or n <= x.shape[1]:
        raise RankDeficiencyError("gust-factor design is rank deficient or has too few rows")
    target = np.log(g[keep])
    coeffs, _, _, _ = np.linalg.lstsq(x, target, rcond=None)
    resid = target - x @ coeffs
    var = float(resid @ resid) / (n - x.shape[1])
    se = np.sqrt(var * np.diag(np.linalg.inv(x.T @ x)))
    return GlmFit(coeffs, tuple(names), math.sqrt(var), se, n, n_dropped)


def glm_predict(fit: GlmFit, ff: float, row: Mapping[str, float]) -> LogNormalGustForecast:
    """Predictive peak-wind distribution ``ff (1 + exp(N(mean, sd^2)))``."""
    x = np.r_[1.0, [float(row[c]) for c in fit.covariates]]
    return LogNormalGustForecast(float(ff), float(x @ fit.coeffs), fit.residual_sd)
