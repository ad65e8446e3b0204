from __future__ import annotations

import csv
import math
import os
from typing import Iterable, Sequence

import numpy as np

from ..marketdata import PRICE_FIELDS, OhlcvSeries, day_to_date
from .compute import compute_column
from .naming import FactorNameError, parse_factor_name


class FactorFrame:
    """An OhlcvSeries plus named factor columns, aligned by bar index.

    ``frame["rsi_14"]`` and ``frame["close"]`` both return read-only arrays.
    """

    def __init__(self, series: OhlcvSeries, columns: dict[str, np.ndarray]):
        for name, col in columns.items():
            if len(col) != len(series):
                raise ValueError(f"column {name!r} not aligned with series")
        self.series = series
        self.columns = dict(columns)

    @property
    def names(self) -> list[str]:
        return list(PRICE_FIELDS) + list(self.columns)

    def __contains__(self, name: str) -> bool:
        return name in self.columns or name in PRICE_FIELDS

    def __getitem__(self, name: str) -> np.ndarray:
        if name in self.columns:
            return self.columns[name]
        if name in PRICE_FIELDS:
            return self.series.column(name)
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.series)

    def row(self, index: int, names: Sequence[str] | None = None) -> list[float]:
        return [float(self[n][index]) for n in (names or self.names)]


def compute_frame(series: OhlcvSeries, names: Iterable[str]) -> FactorFrame:
    """Compute each requested factor once; raw OHLCV names are accepted and skipped."""
    columns: dict[str, np.ndarray] = {}
    for name in names:
        if name in PRICE_FIELDS or name in columns:
            continue
        try:
            spec = parse_factor_name(name)
        except FactorNameError as exc:
            raise type(exc)(f"{name}: {exc}") from None
        columns[name] = compute_column(series, spec)
    return FactorFrame(series, columns)


def _cell(value: float) -> str:
    return "" if math.isnan(value) else repr(value)


def write_factor_csv(frame: FactorFrame, names: Sequence[str], path: str | os.PathLike) -> None:
    """Timestamp plus the requested columns; not-a-value is an empty cell."""
    cols = [frame[n] for n in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", *names])
        for i in range(len(frame)):
            day = day_to_date(frame.series.timestamp[i]).isoformat()
            writer.writerow([day, *(_cell(float(c[i])) for c in cols)])
