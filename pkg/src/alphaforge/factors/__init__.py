"""Technical factor catalog: ``{family}[_{variant}][_{period}]`` columns over OHLCV."""

from .compute import (
    compute_candlestick,
    compute_column,
    compute_counting,
    compute_oscillators,
    compute_position,
    compute_statistical,
    compute_trend,
    compute_volume,
)
from .frame import FactorFrame, compute_frame, write_factor_csv
from .naming import (
    FAMILIES,
    FactorNameError,
    FactorSpec,
    ForbiddenPeriod,
    MalformedFactorName,
    MissingPeriod,
    NonPositivePeriod,
    PeriodTooSmall,
    UnknownFamily,
    parse_factor_name,
)

__all__ = [
    "FAMILIES",
    "FactorFrame",
    "FactorNameError",
    "FactorSpec",
    "ForbiddenPeriod",
    "MalformedFactorName",
    "MissingPeriod",
    "NonPositivePeriod",
    "PeriodTooSmall",
    "UnknownFamily",
    "compute_candlestick",
    "compute_column",
    "compute_counting",
    "compute_frame",
    "compute_oscillators",
    "compute_position",
    "compute_statistical",
    "compute_trend",
    "compute_volume",
    "parse_factor_name",
    "write_factor_csv",
]
