"""Extreme value forecasting: closed-form CRPS, optimum score estimation and verification."""

from .distributions import GevParams, GpdParams
from .errors import (
    ConvergenceError,
    DataError,
    DomainError,
    EvScoreError,
    InfeasibleScaleError,
    InfeasibleStartError,
    PoleError,
    RankDeficiencyError,
    ShapeRangeError,
    SingularHessianError,
)
from .scoring import ForecastCase, ScoreRule, ScoreSummary, crps_gev, crps_gpd

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DataError", "DomainError", "EvScoreError", "ForecastCase", "GevParams",
    "GpdParams", "InfeasibleScaleError", "InfeasibleStartError", "PoleError", "RankDeficiencyError",
    "ScoreRule", "ScoreSummary", "ShapeRangeError", "SingularHessianError", "crps_gev", "crps_gpd",
]
