"""Station data processing, the gust-factor baseline and cross-validation."""

from .crossval import (
    CrossvalConfig,
    CrossvalReport,
    CvFold,
    MethodSpec,
    crossval_run,
    fit_method,
    leave_one_year_out,
    synthetic_daily,
    write_report,
)
from .data import (
    COVARIATES,
    ColumnSpec,
    DailyRecord,
    DailyTable,
    HourlyRecord,
    NormStats,
    aggregate_daily,
    ingest_hourly,
    normalize,
    pressure_tendency,
)
from .glm import GlmFit, glm_fit, glm_predict

__all__ = [
    "COVARIATES", "ColumnSpec", "CrossvalConfig", "CrossvalReport", "CvFold", "DailyRecord",
    "DailyTable", "GlmFit", "HourlyRecord", "MethodSpec", "NormStats", "aggregate_daily",
    "crossval_run", "fit_method", "glm_fit", "glm_predict", "ingest_hourly",
    "leave_one_year_out", "normalize", "pressure_tendency", "synthetic_daily", "write_report",
]
