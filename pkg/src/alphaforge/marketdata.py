"""Loading, validation and windowing of daily OHLCV series."""

from __future__ import annotations

import csv
import datetime as dt
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import AlphaForgeError

PRICE_FIELDS = ("open", "high", "low", "close", "volume")
CANONICAL_HEADER = ("timestamp",) + PRICE_FIELDS

_EPOCH = dt.date(1970, 1, 1)
_MS_PER_DAY = 86_400_000


class MarketDataError(AlphaForgeError):
    pass


class MissingColumn(MarketDataError):
    pass


class UnparseableTimestamp(MarketDataError):
    pass


class DuplicateTimestamp(MarketDataError):
    pass


class EmptyFile(MarketDataError):
    pass


class InsufficientHistory(MarketDataError):
    pass


@dataclass(frozen=True)
class Bar:
    timestamp: int  # epoch days
    open: float
    high: float
    low: float
    close: float
    volume: float

    @property
    def date(self) -> dt.date:
        return day_to_date(self.timestamp)


def day_to_date(day: int) -> dt.date:
    return _EPOCH + dt.timedelta(days=int(day))


def date_to_day(value: dt.date) -> int:
    return (value - _EPOCH).days


def _freeze(values: Iterable[float], dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class OhlcvSeries:
    """Immutable, time-ordered daily bars for one symbol.

    Columns are stored as read-only numpy arrays; index 0 is the oldest bar
    and the last index is the current bar.
    """

    __slots__ = ("symbol", "timestamp", "open", "high", "low", "close", "volume")

    def __init__(self, timestamp, open, high, low, close, volume, symbol: str = ""):
        cols = [_freeze(timestamp, np.int64)] + [
            _freeze(c) for c in (open, high, low, close, volume)
        ]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise MarketDataError("OHLCV columns must have equal length")
        object.__setattr__(self, "symbol", symbol)
        for name, col in zip(CANONICAL_HEADER, cols):
            object.__setattr__(self, name, col)

    def __setattr__(self, name, value):
        raise AttributeError("OhlcvSeries is immutable")

    @classmethod
    def from_bars(cls, bars: Iterable[Bar], symbol: str = "") -> "OhlcvSeries":
        bars = list(bars)
        return cls(
            [b.timestamp for b in bars],
            [b.open for b in bars],
            [b.high for b in bars],
            [b.low for b in bars],
            [b.close for b in bars],
            [b.volume for b in bars],
            symbol=symbol,
        )

    def __len__(self) -> int:
        return len(self.close)

    def __getitem__(self, index: int) -> Bar:
        return Bar(
            int(self.timestamp[index]),
            float(self.open[index]),
            float(self.high[index]),
            float(self.low[index]),
            float(self.close[index]),
            float(self.volume[index]),
        )

    @property
    def bars(self) -> list[Bar]:
        return [self[i] for i in range(len(self))]

    def column(self, name: str) -> np.ndarray:
        if name not in CANONICAL_HEADER:
            raise KeyError(name)
        return getattr(self, name)

    def slice(self, start: int, stop: int) -> "OhlcvSeries":
        return OhlcvSeries(
            self.timestamp[start:stop],
            self.open[start:stop],
            self.high[start:stop],
            self.low[start:stop],
            self.close[start:stop],
            self.volume[start:stop],
            symbol=self.symbol,
        )

    def index_of(self, day: int) -> int:
        """Position of the first bar with timestamp >= ``day``."""
        return int(np.searchsorted(self.timestamp, day, side="left"))

    def __eq__(self, other) -> bool:
        if not isinstance(other, OhlcvSeries):
            return NotImplemented
        return self.symbol == other.symbol and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in CANONICAL_HEADER
        )

    def __repr__(self) -> str:
        return f"OhlcvSeries(symbol={self.symbol!r}, bars={len(self)})"


@dataclass
class CsvSchema:
    """Maps canonical field names to the header names used by a data vendor.

    ``timestamp_format`` is ``"auto"``, ``"iso"`` or ``"epoch_ms"``.
    """

    columns: Mapping[str, str] = field(default_factory=dict)
    timestamp_format: str = "auto"

    def header_for(self, name: str) -> str:
        return self.columns.get(name, name)


def parse_timestamp(text: str, fmt: str = "auto") -> int:
    text = text.strip()
    if not text:
        raise UnparseableTimestamp("empty timestamp")
    if fmt not in ("auto", "iso", "epoch_ms"):
        raise ValueError(f"unknown timestamp format {fmt!r}")
    if fmt == "epoch_ms" or (fmt == "auto" and text.lstrip("-").isdigit()):
        try:
            ms = int(text)
        except ValueError:
            raise UnparseableTimestamp(f"not an epoch-ms integer: {text!r}") from None
        return ms // _MS_PER_DAY
    try:
        if len(text) == 10:
            return date_to_day(dt.date.fromisoformat(text))
        return date_to_day(dt.datetime.fromisoformat(text).date())
    except ValueError:
        raise UnparseableTimestamp(f"cannot parse timestamp {text!r}") from None


def load_csv(path: str | os.PathLike, schema: CsvSchema | None = None,
             symbol: str | None = None) -> OhlcvSeries:
    """Read a CSV with a header row into an ascending OhlcvSeries."""
    schema = schema or CsvSchema()
    if symbol is None:
        symbol = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: no header row")
        header = [h.strip() for h in header]
        positions = {}
        for name in CANONICAL_HEADER:
            col = schema.header_for(name)
            if col not in header:
                raise MissingColumn(f"{path}: missing column {col!r}")
            positions[name] = header.index(col)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                day = parse_timestamp(row[positions["timestamp"]], schema.timestamp_format)
            except UnparseableTimestamp as exc:
                raise UnparseableTimestamp(f"{path}:{lineno}: {exc}") from None
            try:
                values = [float(row[positions[name]]) for name in PRICE_FIELDS]
            except (ValueError, IndexError):
                raise MarketDataError(f"{path}:{lineno}: unparseable price row") from None
            rows.append((day, values))
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        if prev[0] == cur[0]:
            raise DuplicateTimestamp(f"{path}: duplicate timestamp {day_to_date(cur[0])}")
    cols = list(zip(*(vals for _, vals in rows)))
    return OhlcvSeries([r[0] for r in rows], *cols, symbol=symbol)


def to_csv(series: OhlcvSeries, path: str | os.PathLike) -> None:
    """Write the canonical CSV form; floats use repr so reloads are bit-exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANONICAL_HEADER)
        for i in range(len(series)):
            writer.writerow(
                [day_to_date(series.timestamp[i]).isoformat()]
                + [repr(float(series.column(c)[i])) for c in PRICE_FIELDS]
            )


@dataclass(frozen=True)
class Finding:
    index: int
    level: str  # "error" | "warning"
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.level == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.level == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return bool(self.findings)

    def __len__(self) -> int:
        return len(self.findings)


def validate(series: OhlcvSeries, strict: bool = False) -> ValidationReport:
    """Check ordering and bar consistency.

    OHLC inconsistencies and zero volume are warnings unless ``strict``
    upgrades the OHLC ones to errors.
    """
    if len(series) == 0:
        raise MarketDataError("cannot validate an empty series")
    report = ValidationReport()
    add = report.findings.append
    ohlc_level = "error" if strict else "warning"
    ts = series.timestamp
    for i in range(len(series)):
        o, h, l, c, v = (float(series.column(n)[i]) for n in PRICE_FIELDS)
        if i > 0 and ts[i] <= ts[i - 1]:
            add(Finding(i, "error", "timestamp not strictly increasing"))
        if not all(math.isfinite(x) for x in (o, h, l, c, v)):
            add(Finding(i, "error", "non-finite value"))
            continue
        if min(o, h, l, c) <= 0:
            add(Finding(i, "error", "non-positive price"))
        if v < 0:
            add(Finding(i, "error", "negative volume"))
        elif v == 0:
            add(Finding(i, "warning", "zero volume"))
        if h < max(o, c):
            add(Finding(i, ohlc_level, "high below max(open, close)"))
        if l > min(o, c):
            add(Finding(i, ohlc_level, "low above min(open, close)"))
    return report


def window(series: OhlcvSeries, end_index: int, lookback: int) -> OhlcvSeries:
    """The ``lookback`` bars ending at (and including) ``end_index``."""
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    if end_index < 0 or end_index >= len(series):
        raise IndexError(f"end_index {end_index} outside series of length {len(series)}")
    if end_index < lookback - 1:
        raise InsufficientHistory(
            f"need {lookback} bars ending at {end_index}, only {end_index + 1} available"
        )
    return series.slice(end_index - lookback + 1, end_index + 1)
