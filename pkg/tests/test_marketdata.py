import datetime as dt
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphaforge.marketdata import (
    Bar,
    CsvSchema,
    DuplicateTimestamp,
    EmptyFile,
    InsufficientHistory,
    MarketDataError,
    MissingColumn,
    OhlcvSeries,
    UnparseableTimestamp,
    date_to_day,
    load_csv,
    parse_timestamp,
    to_csv,
    validate,
    window,
)

from oracles import make_series, random_ohlcv

HEADER = "timestamp,open,high,low,close,volume\n"


def write(tmp_path, text, name="x.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_sorts_and_parses(tmp_path):
    path = write(tmp_path, HEADER + "2021-01-05,2,3,1,2.5,100\n2021-01-04,1,2,0.5,1.5,90\n")
    s = load_csv(path)
    assert len(s) == 2 and s.symbol == "x"
    assert s[0].date == dt.date(2021, 1, 4) and s.close.tolist() == [1.5, 2.5]


def test_epoch_ms_and_iso_datetime():
    assert parse_timestamp("1609459200000") == date_to_day(dt.date(2021, 1, 1))
    assert parse_timestamp("2021-01-01T15:30:00") == date_to_day(dt.date(2021, 1, 1))
    with pytest.raises(UnparseableTimestamp):
        parse_timestamp("01/02/2021")
    with pytest.raises(UnparseableTimestamp):
        parse_timestamp("")


def test_schema_maps_vendor_headers(tmp_path):
    path = write(tmp_path, "Date,Open,High,Low,Close,Vol\n2021-01-04,1,2,0.5,1.5,90\n")
    schema = CsvSchema({"timestamp": "Date", "open": "Open", "high": "High", "low": "Low",
                        "close": "Close", "volume": "Vol"}, "iso")
    assert load_csv(path, schema).volume.tolist() == [90.0]


@pytest.mark.parametrize("text, error", [
    ("", EmptyFile),
    (HEADER, EmptyFile),
    ("timestamp,open,high,low,close\n2021-01-04,1,2,0.5,1.5\n", MissingColumn),
    (HEADER + "2021-01-04,1,2,0.5,1.5,90\n2021-01-04,1,2,0.5,1.5,90\n", DuplicateTimestamp),
    (HEADER + "yesterday,1,2,0.5,1.5,90\n", UnparseableTimestamp),
    (HEADER + "2021-01-04,1,2,0.5,abc,90\n", MarketDataError),
])
def test_load_errors(tmp_path, text, error):
    with pytest.raises(error):
        load_csv(write(tmp_path, text))


def test_csv_round_trip_is_exact(tmp_path):
    s = random_ohlcv(random.Random(3), 40)
    to_csv(s, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv", symbol=s.symbol)
    assert back == s
    to_csv(back, tmp_path / "t.csv")
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "t.csv").read_bytes()


def test_series_is_immutable():
    s = make_series([1.0, 2.0])
    with pytest.raises(AttributeError):
        s.close = None
    with pytest.raises(ValueError):
        s.close[0] = 5.0


def test_from_bars_and_index_of():
    bars = [Bar(100 + i, 1.0, 2.0, 0.5, 1.5, 10.0) for i in range(3)]
    s = OhlcvSeries.from_bars(bars, "B")
    assert s.bars == bars
    assert s.index_of(101) == 1 and s.index_of(150) == 3


def test_validate_findings():
    s = OhlcvSeries([1, 2, 2, 3], [1, 1, 1, 1], [2, 0.5, 2, 2], [0.5, 0.5, 0.5, 0.5],
                    [1, 1, 1, -1], [10, 0, 10, -5])
    r = validate(s)
    msgs = {(f.index, f.message) for f in r.findings}
    assert (1, "zero volume") in msgs
    assert (1, "high below max(open, close)") in msgs
    assert (2, "timestamp not strictly increasing") in msgs
    assert (3, "non-positive price") in msgs and (3, "negative volume") in msgs
    assert not r.ok
    assert len(validate(s, strict=True).errors) > len(r.errors)
    assert validate(random_ohlcv(random.Random(1), 30)).ok


def test_window():
    s = random_ohlcv(random.Random(0), 20)
    w = window(s, 9, 5)
    assert len(w) == 5 and w.close[-1] == s.close[9] and w.close[0] == s.close[5]
    with pytest.raises(InsufficientHistory):
        window(s, 3, 5)
    with pytest.raises(IndexError):
        window(s, 20, 5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 40000), min_size=1, max_size=30, unique=True))
def test_load_orders_any_permutation(tmp_path_factory, days):
    tmp = tmp_path_factory.mktemp("perm")
    lines = [f"{(dt.date(1970, 1, 1) + dt.timedelta(days=d)).isoformat()},1,2,0.5,{d + 1},5\n"
             for d in days]
    s = load_csv(write(tmp, HEADER + "".join(lines)))
    assert s.timestamp.tolist() == sorted(days)
    assert np.all(np.diff(s.timestamp) > 0)
