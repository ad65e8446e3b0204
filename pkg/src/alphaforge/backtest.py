"""Long-only, single-asset daily backtest.

The decision taken at the close of bar t sets the target weight w_t, which
earns the close-to-close return of bar t+1. The last evaluated bar's
decision is recorded but earns nothing.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .adapter import AdapterConfig, AdapterError, AdapterStrategy
from .decision import Decision, decision_problem
from .dsl import RuleSet, evaluate, required_factors
from .errors import AlphaForgeError, ErrorKind
from .factors import FactorFrame, compute_frame
from .marketdata import PRICE_FIELDS, InsufficientHistory, OhlcvSeries, date_to_day, day_to_date
from .metrics import TRADING_DAYS, MetricsReport, compute_metrics

Strategy = Union[RuleSet, AdapterConfig, Callable[[FactorFrame, int], Decision]]


class ConfigError(AlphaForgeError, ValueError):
    pass


class StrategyError(AlphaForgeError):
    """A strategy returned something outside the decision contract."""


@dataclass(frozen=True)
class BacktestConfig:
    lookback: int = 300
    capital: float = 100_000.0
    cost: float = 0.0
    n_periods: int = TRADING_DAYS
    risk_free: float = 0.0
    start: Optional[str] = None  # ISO date; first evaluated bar is the first on/after it
    end: Optional[str] = None  # ISO date; last evaluated bar is the last on/before it

    def __post_init__(self):
        if not isinstance(self.lookback, int) or self.lookback < 1:
            raise ConfigError("lookback must be an integer >= 1")
        if not self.capital > 0:
            raise ConfigError("capital must be positive")
        if not 0 <= self.cost < 1:
            raise ConfigError("cost must lie in [0, 1)")
        if not isinstance(self.n_periods, int) or self.n_periods < 1:
            raise ConfigError("n_periods must be a positive integer")
        for name in ("start", "end"):
            value = getattr(self, name)
            if value is not None:
                try:
                    _day(value)
                except ValueError:
                    raise ConfigError(f"{name} must be an ISO date, got {value!r}") from None

    @classmethod
    def from_json(cls, data: dict) -> "BacktestConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self) -> dict:
        return asdict(self)


def _day(text: str) -> int:
    import datetime as dt

    return date_to_day(dt.date.fromisoformat(text))


@dataclass
class BacktestResult:
    symbol: str
    config: BacktestConfig
    status: ErrorKind
    timestamps: list[int] = field(default_factory=list)  # evaluated bars, epoch days
    actions: list[int] = field(default_factory=list)
    targets: list[float] = field(default_factory=list)  # position field as emitted
    weights: list[float] = field(default_factory=list)  # w_t after applying the decision
    equity: list[float] = field(default_factory=list)
    rets: list[float] = field(default_factory=list)
    n_trades: int = 0
    metrics: Optional[MetricsReport] = None
    error: str = ""
    warnings: list[str] = field(default_factory=list)
    first_index: int = 0

    @property
    def ok(self) -> bool:
        return self.status is ErrorKind.SUCCESS

    def to_json(self) -> dict:
        return {
            "symbol": self.symbol,
            "status": self.status.value,
            "error": self.error,
            "config": self.config.to_json(),
            "first_index": self.first_index,
            "n_bars": len(self.actions),
            "n_trades": self.n_trades,
            "metrics": self.metrics.to_json() if self.metrics else None,
            "warnings": list(self.warnings),
        }


def evaluation_range(series: OhlcvSeries, config: BacktestConfig) -> tuple[int, int]:
    """First and last (inclusive) evaluated bar indices."""
    first = config.lookback - 1
    if config.start is not None:
        first = max(first, series.index_of(_day(config.start)))
    last = len(series) - 1
    if config.end is not None:
        last = min(last, int(np.searchsorted(series.timestamp, _day(config.end), side="right")) - 1)
    if first > len(series) - 1 or config.lookback - 1 >= len(series):
        raise InsufficientHistory(
            f"{len(series)} bars cannot cover a {config.lookback}-bar lookback"
            + (f" starting {config.start}" if config.start else "")
        )
    if last < first:
        raise InsufficientHistory("evaluation window is empty")
    return first, last


class _Decider:
    """Uniform per-bar interface over the supported strategy kinds."""

    def __init__(self, strategy: Strategy, series: OhlcvSeries, first: int, lookback: int):
        self.adapter = None
        if isinstance(strategy, RuleSet):
            frame = compute_frame(series, required_factors(strategy))
            self._decide = lambda i: evaluate(strategy, frame, i)
        elif isinstance(strategy, AdapterConfig):
            frame = compute_frame(series, strategy.factors)
            columns = list(PRICE_FIELDS) + [f for f in strategy.factors if f not in PRICE_FIELDS]
            cols = [frame[c] for c in columns]
            self.adapter = AdapterStrategy(strategy, columns)
            row = lambda i: [float(c[i]) for c in cols]
            for i in range(max(0, first - lookback + 1), first):
                self.adapter.step(i, row(i), warmup=True)
            self._decide = lambda i: self.adapter.step(i, row(i))
        elif callable(strategy):
            frame = compute_frame(series, [])
            self._decide = lambda i: strategy(frame, i)
        else:
            raise TypeError(f"unsupported strategy type {type(strategy).__name__}")

    def __call__(self, index: int) -> Decision:
        d = self._decide(index)
        if not isinstance(d, Decision):
            raise StrategyError(f"strategy returned {d!r}, not a Decision")
        problem = decision_problem(d.signal, d.position)
        if problem:
            raise StrategyError(problem)
        return d

    def close(self):
        if self.adapter is not None:
            self.adapter.close()


def run(series: OhlcvSeries, strategy: Strategy,
        config: BacktestConfig | None = None) -> BacktestResult:
    """Simulate ``strategy`` on ``series``.

    Strategy failures do not raise: they come back as a result whose status
    names the failure and whose metrics are absent.
    """
    config = config or BacktestConfig()
    first, last = evaluation_range(series, config)
    result = BacktestResult(series.symbol, config, ErrorKind.SUCCESS, first_index=first)
    close = series.close
    w = 0.0
    decider = None
    try:
        decider = _Decider(strategy, series, first, config.lookback)
        for t in range(first, last + 1):
            d = decider(t)
            prev_w = w
            if d.signal == 1:
                w = float(d.position)
            elif d.signal == -1:
                if d.position > 0:
                    result.warnings.append(
                        f"bar {t}: sell with position {d.position!r}; position ignored")
                w = 0.0
            if w != prev_w:
                result.n_trades += 1
            result.timestamps.append(int(series.timestamp[t]))
            result.actions.append(int(d.signal))
            result.targets.append(float(d.position))
            result.weights.append(w)
    except (AdapterError, StrategyError) as exc:
        result.status = getattr(exc, "kind", ErrorKind.OTHER_ERROR)
        result.error = f"{type(exc).__name__}: {exc}"
        return result
    finally:
        if decider is not None:
            decider.close()

    equity = [float(config.capital)]
    prev_w = 0.0
    for k, t in enumerate(range(first, last)):
        w_t = result.weights[k]
        r = w_t * (close[t + 1] / close[t] - 1.0) - config.cost * abs(w_t - prev_w)
        prev_w = w_t
        result.rets.append(float(r))
        equity.append(equity[-1] * (1.0 + r))
    result.equity = equity
    result.metrics = compute_metrics(result.rets, equity, result.n_trades,
                                     config.risk_free, config.n_periods)
    return result


# -- determinism ------------------------------------------------------------------------

@dataclass
class DeterminismReport:
    equal: bool
    config_mismatch: bool = False
    first_divergence: Optional[int] = None  # bar offset into the evaluated range
    field: str = ""
    run: Optional[int] = None  # which result differs from the first

    def __bool__(self) -> bool:
        return self.equal


def _bits(values: Sequence[float]) -> bytes:
    return np.asarray(values, dtype=np.float64).tobytes()


def _first_difference(a: Sequence, b: Sequence) -> int:
    for i, (x, y) in enumerate(zip(a, b)):
        if _bits([x]) != _bits([y]):
            return i
    return min(len(a), len(b))


def compare_runs(results: Sequence[BacktestResult]) -> DeterminismReport:
    """Bitwise comparison of every result against the first one."""
    if len(results) < 2:
        return DeterminismReport(True)
    base = results[0]
    for n, other in enumerate(results[1:], start=1):
        if other.config != base.config or other.symbol != base.symbol:
            return DeterminismReport(False, config_mismatch=True, run=n)
        for name in ("actions", "targets", "weights", "equity", "timestamps"):
            a, b = getattr(base, name), getattr(other, name)
            if len(a) != len(b) or _bits(a) != _bits(b):
                return DeterminismReport(False, first_divergence=_first_difference(a, b),
                                         field=name, run=n)
        if other.status != base.status:
            return DeterminismReport(False, field="status", run=n)
    return DeterminismReport(True)


# -- output files ---------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def write_outputs(result: BacktestResult, out_dir: str | os.PathLike) -> None:
    """``equity.csv``, ``actions.csv`` and ``result.json`` under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    dates = [day_to_date(d).isoformat() for d in result.timestamps]
    with open(os.path.join(out_dir, "equity.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "equity", "weight", "ret"])
        for k, value in enumerate(result.equity):
            ret = _fmt(result.rets[k - 1]) if k else ""
            writer.writerow([dates[k], _fmt(value), _fmt(result.weights[k]), ret])
    with open(os.path.join(out_dir, "actions.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "index", "signal", "position", "weight"])
        for k, day in enumerate(dates):
            writer.writerow([day, result.first_index + k, result.actions[k],
                             _fmt(result.targets[k]), _fmt(result.weights[k])])
    with open(os.path.join(out_dir, "result.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
