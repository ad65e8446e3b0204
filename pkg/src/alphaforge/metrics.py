"""Return/risk metrics over a per-period portfolio return series.

Undefined values (zero volatility, zero drawdown, too few points) are
returned as ``None`` and listed in ``MetricsReport.undefined``; they are
never coerced to zero or infinity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .errors import AlphaForgeError

TRADING_DAYS = 252
METRIC_NAMES = ("arr", "sr", "mdd", "cr", "sor", "vol", "dd")


class MetricsError(AlphaForgeError, ValueError):
    pass


class EmptySeries(MetricsError):
    pass


class NonPositiveWealth(MetricsError):
    pass


class NonPositiveEquity(MetricsError):
    pass


def _as_array(rets: Sequence[float]) -> np.ndarray:
    return np.asarray(rets, dtype=float)


def _is_constant(x: np.ndarray) -> bool:
    return bool(x.max() == x.min())


def annual_return(rets: Sequence[float], n_periods: int = TRADING_DAYS) -> float:
    r = _as_array(rets)
    if r.size == 0:
        raise EmptySeries("annual return needs at least one return")
    if np.any(1.0 + r <= 0):
        raise NonPositiveWealth("a period return of -100% or worse wipes out wealth")
    log_growth = math.fsum(np.log1p(r).tolist())
    return math.expm1(log_growth * n_periods / r.size)


def volatility(rets: Sequence[float], n_periods: int = TRADING_DAYS) -> Optional[float]:
    r = _as_array(rets)
    if r.size < 2:
        return None
    if _is_constant(r):
        return 0.0
    return float(r.std(ddof=1)) * math.sqrt(n_periods)


def sharpe(rets: Sequence[float], risk_free: float = 0.0,
           n_periods: int = TRADING_DAYS) -> Optional[float]:
    r = _as_array(rets)
    if r.size < 2 or _is_constant(r):
        return None
    sd = float(r.std(ddof=1))
    if sd == 0:  # subnormal spreads underflow
        return None
    return (float(r.mean()) - risk_free) / sd * math.sqrt(n_periods)


def downside_deviation(rets: Sequence[float], risk_free: float = 0.0,
                       n_periods: int = TRADING_DAYS) -> float:
    """Annualised root-mean-square of shortfalls below ``risk_free`` (1/T mean)."""
    r = _as_array(rets)
    if r.size == 0:
        raise EmptySeries("downside deviation needs at least one return")
    short = np.minimum(r - risk_free, 0.0)
    return math.sqrt(float(np.mean(short * short))) * math.sqrt(n_periods)


def sortino(rets: Sequence[float], risk_free: float = 0.0,
            n_periods: int = TRADING_DAYS) -> Optional[float]:
    r = _as_array(rets)
    dd = downside_deviation(r, risk_free, n_periods)
    if dd == 0:
        return None
    # dd is annualised by sqrt(N); scaling the mean by N keeps the ratio annualised
    return (float(r.mean()) - risk_free) * n_periods / dd


def max_drawdown(equity: Sequence[float]) -> float:
    v = _as_array(equity)
    if v.size == 0:
        raise EmptySeries("max drawdown needs an equity curve")
    if np.any(v <= 0):
        raise NonPositiveEquity("equity must stay positive")
    peak = np.maximum.accumulate(v)
    return float(np.max((peak - v) / peak))


def calmar(arr: Optional[float], mdd: Optional[float]) -> Optional[float]:
    if arr is None or mdd is None or mdd == 0:
        return None
    return arr / abs(mdd)


@dataclass
class MetricsReport:
    arr: Optional[float]
    sr: Optional[float]
    mdd: Optional[float]
    cr: Optional[float]
    sor: Optional[float]
    vol: Optional[float]
    dd: Optional[float]
    n_trades: int = 0

    @property
    def undefined(self) -> list[str]:
        return [name for name in METRIC_NAMES if getattr(self, name) is None]

    def to_json(self) -> dict:
        out = asdict(self)
        out["undefined"] = self.undefined
        return out

    @classmethod
    def from_json(cls, data: dict) -> "MetricsReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def compute_metrics(rets: Sequence[float], equity: Sequence[float], n_trades: int = 0,
                    risk_free: float = 0.0,
                    n_periods: int = TRADING_DAYS) -> MetricsReport:
    """All metrics for one backtest; an empty return series leaves them undefined."""
    r = _as_array(rets)
    mdd = max_drawdown(equity) if len(equity) else None
    if r.size == 0:
        return MetricsReport(None, None, mdd, None, None, None, None, n_trades)
    arr = annual_return(r, n_periods)
    return MetricsReport(
        arr=arr,
        sr=sharpe(r, risk_free, n_periods),
        mdd=mdd,
        cr=calmar(arr, mdd),
        sor=sortino(r, risk_free, n_periods),
        vol=volatility(r, n_periods),
        dd=downside_deviation(r, risk_free, n_periods),
        n_trades=n_trades,
    )
