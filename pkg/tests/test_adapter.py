import json
import os
import random
import sys
import time

import pytest

from alphaforge.adapter import (
    AdapterConfig,
    ChildCrashed,
    ProtocolError,
    SpawnFailure,
    StrategyRejected,
    Timeout,
    classify_error,
    handshake,
    parse_decision,
)
from alphaforge.backtest import BacktestConfig, compare_runs, run
from alphaforge.decision import Decision
from alphaforge.dsl import parse
from alphaforge.errors import ErrorKind

from oracles import random_ohlcv

HERE = os.path.dirname(__file__)
CHILDREN = os.path.join(HERE, "children")
COLUMNS = ["open", "high", "low", "close", "volume"]


def scripted(*args, **kwargs):
    cmd = (sys.executable, os.path.join(CHILDREN, "scripted.py"), *map(str, args))
    kwargs.setdefault("step_timeout", 10.0)
    return AdapterConfig(command=cmd, **kwargs)


def child_file(name, **kwargs):
    return AdapterConfig.python_file(os.path.join(CHILDREN, name), **kwargs)


ROW = [1.0, 2.0, 0.5, 1.5, 100.0]


# -- classification ---------------------------------------------------------------

@pytest.mark.parametrize("stderr, kind", [
    ("Traceback...\nNameError: name 'x' is not defined\n", ErrorKind.NAME_ERROR),
    ("Traceback...\nZeroDivisionError: division by zero", ErrorKind.OTHER_ERROR),
    ("", ErrorKind.OTHER_ERROR),
    ("  File 'x'\nSyntaxError: invalid syntax\n\n", ErrorKind.SYNTAX_ERROR),
    ("AttributeError: 'Series' object has no attribute 'foo'", ErrorKind.ATTRIBUTE_ERROR),
    ("NameError: earlier\nKeyError: 'close'", ErrorKind.OTHER_ERROR),
    ("IndentationError: unexpected indent", ErrorKind.OTHER_ERROR),
])
def test_classify_error(stderr, kind):
    assert classify_error(stderr, 1) is kind


def test_fold_to_reported_buckets():
    assert ErrorKind.TIMEOUT.folded() is ErrorKind.OTHER_ERROR
    assert ErrorKind.PROTOCOL_ERROR.folded() is ErrorKind.OTHER_ERROR
    assert ErrorKind.NAME_ERROR.folded() is ErrorKind.NAME_ERROR


# -- decision decoding -------------------------------------------------------------

@pytest.mark.parametrize("line, expected", [
    ('{"signal": 1, "position": 0.5}', Decision(1, 0.5)),
    ('{"signal": -1, "position": 0.0}', Decision(-1, 0.0)),
    ('{"position": 1, "signal": 0}', Decision(0, 1.0)),
])
def test_parse_decision_valid(line, expected):
    assert parse_decision(line) == expected


@pytest.mark.parametrize("line", [
    '{"signal": 2, "position": 0.5}',
    '{"signal": 1, "position": 1.5}',
    '{"signal": 1, "position": -0.1}',
    '{"signal": 1.0, "position": 0.5}',
    '{"signal": true, "position": 0.5}',
    '{"signal": 1, "position": "0.5"}',
    '{"signal": 1}',
    '{"signal": 1, "position": 0.5, "extra": 1}',
    '[1, 0.5]',
    'not json',
    '{"signal": 1, "position": NaN}',
])
def test_parse_decision_rejects(line):
    with pytest.raises(ProtocolError):
        parse_decision(line)


def test_config_validation():
    with pytest.raises(ValueError):
        AdapterConfig(command=())
    with pytest.raises(ValueError):
        AdapterConfig(command=("x",), step_timeout=0)
    with pytest.raises(ValueError):
        AdapterConfig(command="python strat.py")


# -- live sessions -----------------------------------------------------------------

def test_handshake_and_step():
    with handshake(scripted("replay", '[{"signal": 1, "position": 0.5}]'), COLUMNS) as s:
        assert s.step(0, ROW, warmup=True) is None
        assert s.step(1, ROW) == Decision(1, 0.5)
        assert s.step(2, [float("nan")] * 5) == Decision(1, 0.5)


def test_sell_reply():
    with handshake(scripted("replay", '[{"signal": -1, "position": 0.0}]'), COLUMNS) as s:
        assert s.step(0, ROW) == Decision(-1, 0.0)


def test_child_exits_immediately():
    with pytest.raises(SpawnFailure) as info:
        handshake(scripted("die", "ImportError: no module named foo"), COLUMNS)
    assert "ImportError" in info.value.stderr
    assert info.value.kind is ErrorKind.OTHER_ERROR


def test_missing_executable():
    with pytest.raises(SpawnFailure):
        handshake(AdapterConfig(command=("/nonexistent/strategy-bin",)), COLUMNS)


@pytest.mark.parametrize("message, kind", [
    ("SyntaxError: invalid syntax (strategy.py, line 3)", ErrorKind.SYNTAX_ERROR),
    ("NameError: name 'rsi' is not defined", ErrorKind.NAME_ERROR),
    ("AttributeError: module 'pandas' has no attribute 'rolling'", ErrorKind.ATTRIBUTE_ERROR),
    ("KeyError: 'rsi_14'", ErrorKind.OTHER_ERROR),
])
def test_ack_failure_classified(message, kind):
    with pytest.raises(StrategyRejected) as info:
        handshake(scripted("ack_error", message), COLUMNS)
    assert info.value.kind is kind


def test_malformed_ack():
    with pytest.raises(ProtocolError):
        handshake(scripted("bad_ack"), COLUMNS)


@pytest.mark.parametrize("reply", [
    '{"signal": 2, "position": 0.5}',
    '{"signal": 1, "position": 1.01}',
    'garbage',
    '{"signal": 1, "position": 0.5, "note": "x"}',
])
def test_out_of_contract_reply(reply):
    s = handshake(scripted("raw", reply), COLUMNS)
    with pytest.raises(ProtocolError) as info:
        s.step(0, ROW)
    assert info.value.kind.folded() is ErrorKind.OTHER_ERROR
    s.close()


def test_step_timeout():
    s = handshake(scripted("hang", step_timeout=0.3), COLUMNS)
    started = time.monotonic()
    with pytest.raises(Timeout) as info:
        s.step(0, ROW)
    assert time.monotonic() - started < 5
    assert info.value.kind is ErrorKind.TIMEOUT
    assert s.proc.poll() is not None
    s.close()


def test_total_timeout():
    s = handshake(scripted("hang", step_timeout=5.0, total_timeout=0.3), COLUMNS)
    with pytest.raises(Timeout):
        s.step(0, ROW)
    s.close()


def test_crash_classified_from_stderr():
    s = handshake(scripted("crash_at", 2, "AttributeError: 'float' object has no attribute 'x'"),
                  COLUMNS)
    s.step(0, ROW)
    s.step(1, ROW)
    with pytest.raises(ChildCrashed) as info:
        s.step(2, ROW)
    assert info.value.kind is ErrorKind.ATTRIBUTE_ERROR
    assert "Traceback" in info.value.stderr
    s.close()


def test_row_length_checked():
    with handshake(scripted("replay", '[{"signal": 0, "position": 0.0}]'), COLUMNS) as s:
        with pytest.raises(ValueError):
            s.step(0, [1.0])


# -- adapter-driven backtests ------------------------------------------------------

@pytest.fixture(scope="module")
def series():
    return random_ohlcv(random.Random(5), 60)


CFG = BacktestConfig(lookback=20)


def test_scripted_replay_is_byte_identical(series, tmp_path):
    from alphaforge.backtest import write_outputs

    replies = json.dumps([{"signal": 1, "position": 0.5}, {"signal": 0, "position": 0.0},
                          {"signal": -1, "position": 0.0}, {"signal": 1, "position": 1.0}])
    outs = []
    results = []
    for k in range(2):
        res = run(series, scripted("replay", replies), CFG)
        assert res.ok
        write_outputs(res, tmp_path / str(k))
        results.append(res)
        outs.append([(tmp_path / str(k) / f).read_bytes()
                     for f in ("equity.csv", "actions.csv", "result.json")])
    assert outs[0] == outs[1]
    assert compare_runs(results).equal
    assert results[0].actions[:4] == [1, 0, -1, 1]


def test_adapter_matches_equivalent_dsl(series):
    dsl = parse("WHEN close > prev(close) EMIT signal=1 position=1;"
                "WHEN close < prev(close) EMIT signal=-1 position=0;")
    a = run(series, scripted("momentum"), CFG)
    b = run(series, dsl, CFG)
    c = run(series, child_file("good_strategy.py"), CFG)
    assert a.actions == b.actions == c.actions
    assert a.equity == b.equity == c.equity


@pytest.mark.parametrize("name, kind", [
    ("syntax_strategy.py", ErrorKind.SYNTAX_ERROR),
    ("name_strategy.py", ErrorKind.NAME_ERROR),
    ("attr_strategy.py", ErrorKind.ATTRIBUTE_ERROR),
])
def test_python_child_errors(series, name, kind):
    res = run(series, child_file(name), CFG)
    assert res.status is kind
    assert res.metrics is None


def test_protocol_error_becomes_status(series):
    res = run(series, scripted("raw", '{"signal": 3, "position": 0.5}'), CFG)
    assert res.status is ErrorKind.PROTOCOL_ERROR
    assert res.metrics is None and res.error.startswith("ProtocolError")


def test_restart_recovers_from_timeout(series, tmp_path):
    marker = tmp_path / "slept"
    cfg = scripted("slow_once", 5, marker, step_timeout=0.5, max_restarts=1)
    res = run(series, cfg, CFG)
    assert res.ok and marker.exists()
    assert set(res.actions) == {1}


def test_without_restart_timeout_fails(series, tmp_path):
    cfg = scripted("slow_once", 5, tmp_path / "m", step_timeout=0.5)
    res = run(series, cfg, CFG)
    assert res.status is ErrorKind.TIMEOUT
