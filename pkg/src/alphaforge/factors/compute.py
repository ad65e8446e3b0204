"""Vectorised factor computation over an OhlcvSeries.

Every column has the series' length. Undefined entries (warm-up, zero
denominators, zero-variance correlations) are NaN; infinities never appear.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..marketdata import OhlcvSeries
from .naming import (
    GROUPS,
    MACD_FAST,
    MACD_SIGNAL,
    MACD_SLOW,
    STOCH_D_PERIOD,
    FactorSpec,
)

NAN = float("nan")


# -- primitives ---------------------------------------------------------------

def _div(num, den) -> np.ndarray:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    out = np.where(den == 0, NAN, out)
    out[~np.isfinite(out)] = NAN
    return out


def _windows(x: np.ndarray, w: int, start: int = 0):
    """Trailing windows of ``x[start:]`` and the output index of the first one."""
    body = x[start:]
    if len(body) < w:
        return None, 0
    return sliding_window_view(body, w), start + w - 1


def _place(n: int, values: np.ndarray, first: int) -> np.ndarray:
    out = np.full(n, NAN)
    if values is not None:
        out[first:first + len(values)] = values
    return out


def _constant(win: np.ndarray) -> np.ndarray:
    return win.max(axis=1) == win.min(axis=1)


def rolling_mean(x: np.ndarray, w: int, start: int = 0) -> np.ndarray:
    win, first = _windows(x, w, start)
    if win is None:
        return _place(len(x), None, 0)
    # constant windows return the value itself so identities stay exact
    vals = np.where(_constant(win), win[:, -1], win.mean(axis=1))
    return _place(len(x), vals, first)


def rolling_std(x: np.ndarray, w: int, start: int = 0) -> np.ndarray:
    """Sample (ddof=1) standard deviation; NaN for w == 1."""
    win, first = _windows(x, w, start)
    if win is None or w < 2:
        return _place(len(x), None, 0)
    vals = np.where(_constant(win), 0.0, win.std(axis=1, ddof=1))
    return _place(len(x), vals, first)


def rolling_sum(x: np.ndarray, w: int, start: int = 0) -> np.ndarray:
    win, first = _windows(x, w, start)
    if win is None:
        return _place(len(x), None, 0)
    return _place(len(x), win.sum(axis=1), first)


def rolling_max(x: np.ndarray, w: int, start: int = 0) -> np.ndarray:
    win, first = _windows(x, w, start)
    if win is None:
        return _place(len(x), None, 0)
    return _place(len(x), win.max(axis=1), first)


def rolling_min(x: np.ndarray, w: int, start: int = 0) -> np.ndarray:
    win, first = _windows(x, w, start)
    if win is None:
        return _place(len(x), None, 0)
    return _place(len(x), win.min(axis=1), first)


def rolling_corr(x: np.ndarray, y: np.ndarray, w: int, start: int = 0) -> np.ndarray:
    wx, first = _windows(x, w, start)
    wy, _ = _windows(y, w, start)
    if wx is None:
        return _place(len(x), None, 0)
    dx = wx - wx.mean(axis=1, keepdims=True)
    dy = wy - wy.mean(axis=1, keepdims=True)
    den = np.sqrt((dx * dx).sum(axis=1) * (dy * dy).sum(axis=1))
    vals = _div((dx * dy).sum(axis=1), den)
    vals = np.where(_constant(wx) | _constant(wy), NAN, np.clip(vals, -1.0, 1.0))
    return _place(len(x), vals, first)


def ema(x: np.ndarray, w: int, start: int = 0) -> np.ndarray:
    """EMA with alpha = 2/(w+1) seeded at ``x[start]``; unmasked."""
    n = len(x)
    out = np.full(n, NAN)
    if start >= n:
        return out
    alpha = 2.0 / (w + 1.0)
    level = float(x[start])
    out[start] = level
    for t in range(start + 1, n):
        level = level + alpha * (float(x[t]) - level)
        out[t] = level
    return out


def _mask_prefix(x: np.ndarray, count: int) -> np.ndarray:
    out = x.copy()
    out[:count] = NAN
    return out


def simple_returns(close: np.ndarray) -> np.ndarray:
    ret = np.full(len(close), NAN)
    if len(close) > 1:
        ret[1:] = _div(close[1:], close[:-1]) - 1.0
    return ret


def diff(x: np.ndarray) -> np.ndarray:
    out = np.full(len(x), NAN)
    out[1:] = x[1:] - x[:-1]
    return out


def shift(x: np.ndarray, k: int) -> np.ndarray:
    out = np.full(len(x), NAN)
    if k < len(x):
        out[k:] = x[:len(x) - k]
    return out


def true_range(high, low, close) -> np.ndarray:
    tr = np.asarray(high - low, dtype=float).copy()
    if len(close) > 1:
        prev = close[:-1]
        tr[1:] = np.maximum.reduce(
            [high[1:] - low[1:], np.abs(high[1:] - prev), np.abs(low[1:] - prev)]
        )
    return tr


def _one_sided_index(pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    """100 - 100/(1 + pos/neg) with neg == 0 -> 100 and both zero -> NaN."""
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 100.0 - 100.0 / (1.0 + pos / neg)
    val = np.where(neg == 0, np.where(pos > 0, 100.0, NAN), val)
    val[~np.isfinite(val)] = NAN
    return val


def _bars_since_extreme(x: np.ndarray, w: int, use_max: bool) -> np.ndarray:
    """Bars elapsed since the window extreme; ties go to the most recent bar."""
    win, first = _windows(x, w)
    if win is None:
        return _place(len(x), None, 0)
    rev = win[:, ::-1]
    idx = rev.argmax(axis=1) if use_max else rev.argmin(axis=1)
    return _place(len(x), idx.astype(float), first)


# -- family groups ------------------------------------------------------------

def compute_trend(series: OhlcvSeries, spec: FactorSpec) -> np.ndarray:
    c = series.close
    fam, w = spec.family, spec.period
    if fam == "ema":
        return _mask_prefix(ema(c, w), w - 1)
    if fam == "sma":
        return rolling_mean(c, w)
    if fam == "ma":
        return _div(rolling_mean(c, w), c)
    if fam == "bb":
        mid = rolling_mean(c, w)
        if spec.variant == "middle":
            return mid
        sd = rolling_std(c, w)
        return mid + 2.0 * sd if spec.variant == "upper" else mid - 2.0 * sd
    if fam == "atr":
        return rolling_mean(true_range(series.high, series.low, c), w)
    if fam == "macd":
        line = ema(c, MACD_FAST) - ema(c, MACD_SLOW)
        line = _mask_prefix(line, MACD_SLOW - 1)
        if spec.variant == "line":
            return line
        signal = _mask_prefix(ema(line, MACD_SIGNAL, start=MACD_SLOW - 1),
                              MACD_SLOW - 1 + MACD_SIGNAL - 1)
        return signal if spec.variant == "signal" else line - signal
    if fam == "roc":
        return _div(shift(c, w), c)
    if fam == "max":
        return _div(rolling_max(c, w), c)
    if fam == "min":
        return _div(rolling_min(c, w), c)
    raise ValueError(f"{spec.name} is not a trend factor")


def compute_oscillators(series: OhlcvSeries, spec: FactorSpec) -> np.ndarray:
    c, h, l, v = series.close, series.high, series.low, series.volume
    fam, w = spec.family, spec.period
    if fam == "rsi":
        d = diff(c)
        gain = rolling_mean(np.maximum(d, 0.0), w, start=1)
        loss = rolling_mean(np.maximum(-d, 0.0), w, start=1)
        return _one_sided_index(gain, loss)
    if fam == "mfi":
        tp = (h + l + c) / 3.0
        flow = tp * v
        dtp = diff(tp)
        pos = rolling_sum(np.where(dtp > 0, flow, 0.0), w, start=1)
        neg = rolling_sum(np.where(dtp < 0, flow, 0.0), w, start=1)
        return _one_sided_index(pos, neg)
    if fam == "stoch":
        lo = rolling_min(l, w)
        k = _div(c - lo, rolling_max(h, w) - lo) * 100.0
        if spec.variant == "k":
            return k
        win, first = _windows(k, STOCH_D_PERIOD)
        return _place(len(c), None if win is None else win.mean(axis=1), first)
    if fam == "cci":
        tp = (h + l + c) / 3.0
        win, first = _windows(tp, w)
        if win is None:
            return _place(len(c), None, 0)
        mean = win.mean(axis=1)
        mad = np.abs(win - mean[:, None]).mean(axis=1)
        mad = np.where(_constant(win), 0.0, mad)
        return _place(len(c), _div(win[:, -1] - mean, 0.015 * mad), first)
    if fam == "obv":
        step = np.sign(simple_returns(c)) * v
        step[~np.isfinite(step)] = 0.0
        return np.cumsum(step)
    raise ValueError(f"{spec.name} is not an oscillator factor")


def compute_statistical(series: OhlcvSeries, spec: FactorSpec) -> np.ndarray:
    c, v = series.close, series.volume
    fam, w = spec.family, spec.period
    if fam == "std":
        return _div(rolling_std(c, w), c)
    if fam == "vstd":
        return _div(rolling_std(v, w), v)
    if fam == "beta":
        return _div(shift(c, w) - c, w * c)
    if fam == "corr":
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.log(v)
        logv[~np.isfinite(logv)] = NAN
        return rolling_corr(c, logv, w)
    if fam == "cord":
        return rolling_corr(diff(c), diff(v), w, start=1)
    raise ValueError(f"{spec.name} is not a statistical factor")


def compute_position(series: OhlcvSeries, spec: FactorSpec) -> np.ndarray:
    c, h, l = series.close, series.high, series.low
    fam, w = spec.family, spec.period
    if fam == "rank":
        win, first = _windows(c, w)
        if win is None:
            return _place(len(c), None, 0)
        below = (win < win[:, -1:]).sum(axis=1)
        return _place(len(c), below / w, first)
    if fam == "imax":
        return _bars_since_extreme(h, w, use_max=True) / w
    if fam == "imin":
        return _bars_since_extreme(l, w, use_max=False) / w
    if fam == "imxd":
        return (_bars_since_extreme(h, w, True) - _bars_since_extreme(l, w, False)) / w
    if fam == "rsv":
        lo = rolling_min(l, w)
        return _div(c - lo, rolling_max(h, w) - lo)
    if fam in ("qtlu", "qtld"):
        win, first = _windows(c, w)
        if win is None:
            return _place(len(c), None, 0)
        q = np.quantile(win, 0.8 if fam == "qtlu" else 0.2, axis=1)
        return _place(len(c), _div(win[:, -1] - q, win[:, -1]), first)
    raise ValueError(f"{spec.name} is not a position factor")


def compute_candlestick(series: OhlcvSeries, spec: FactorSpec) -> np.ndarray:
    o, h, l, c = series.open, series.high, series.low, series.close
    top, bottom = np.maximum(o, c), np.minimum(o, c)
    rng = h - l
    formulas = {
        "klen": lambda: _div(rng, o),
        "kup": lambda: _div(h - top, o),
        "kup2": lambda: _div(h - top, rng),
        "klow": lambda: _div(bottom - l, o),
        "klow2": lambda: _div(bottom - l, rng),
        "kmid": lambda: _div(c - o, c),
        "kmid2": lambda: _div(c - o, rng),
        "ksft": lambda: _div(2.0 * c - h - l, o),
        "ksft2": lambda: _div(2.0 * c - h - l, rng),
    }
    try:
        return formulas[spec.family]()
    except KeyError:
        raise ValueError(f"{spec.name} is not a candlestick factor") from None


def compute_volume(series: OhlcvSeries, spec: FactorSpec) -> np.ndarray:
    c, v = series.close, series.volume
    fam, w = spec.family, spec.period
    if fam == "vma":
        return _div(rolling_mean(v, w), v)
    if fam == "logvol":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(v + 1.0)
        out[~np.isfinite(out)] = NAN
        return out
    if fam == "wvma":
        x = np.abs(simple_returns(c)) * v
        return _div(rolling_std(x, w, start=1), rolling_mean(x, w, start=1))
    raise ValueError(f"{spec.name} is not a volume factor")


def compute_counting(series: OhlcvSeries, spec: FactorSpec) -> np.ndarray:
    fam, w = spec.family, spec.period
    if fam.startswith("cnt"):
        ret = simple_returns(series.close)
        up = rolling_sum((ret > 0).astype(float), w, start=1) / w
        down = rolling_sum((ret < 0).astype(float), w, start=1) / w
        return {"cntp": up, "cntn": down, "cntd": up - down}[fam]
    if fam.startswith("vsum"):
        move = diff(series.volume)
    else:
        move = simple_returns(series.close)
    share = _div(rolling_sum(np.maximum(move, 0.0), w, start=1),
                 rolling_sum(np.abs(move), w, start=1))
    kind = fam[-1]
    if kind == "p":
        return share
    if kind == "n":
        return 1.0 - share
    if kind == "d":
        return 2.0 * share - 1.0
    raise ValueError(f"{spec.name} is not a counting factor")


_GROUP_FUNCS = {
    "trend": compute_trend,
    "oscillators": compute_oscillators,
    "statistical": compute_statistical,
    "position": compute_position,
    "candlestick": compute_candlestick,
    "volume": compute_volume,
    "counting": compute_counting,
}
assert set(_GROUP_FUNCS) == set(GROUPS)


def compute_column(series: OhlcvSeries, spec: FactorSpec) -> np.ndarray:
    values = np.asarray(_GROUP_FUNCS[spec.group](series, spec), dtype=float)
    values.setflags(write=False)
    return values
