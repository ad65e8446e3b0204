import csv
import json
import os
import sys

import pytest

from alphaforge.cli import main

from workspace import STRATEGIES, build, snapshot

CHILDREN = os.path.join(os.path.dirname(__file__), "children")


@pytest.fixture()
def ws(tmp_path):
    manifest = build(tmp_path, n_bars=160, runs=2, config={"lookback": 60})
    return tmp_path, manifest


def test_factors_compute(ws, tmp_path):
    root, _ = ws
    out = root / "f.csv"
    assert main(["factors", "compute", "--data", str(root / "data/SYNA.csv"),
                 "--factors", "rsi_14,ema_20,macd", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["timestamp", "rsi_14", "ema_20", "macd"]
    assert len(rows) == 161 and rows[1][1] == "" and rows[-1][1] != ""


def test_factors_compute_bad_name(ws):
    root, _ = ws
    assert main(["factors", "compute", "--data", str(root / "data/SYNA.csv"),
                 "--factors", "rsi", "--out", str(root / "f.csv")]) == 2


def test_data_validate(ws, capsys):
    root, _ = ws
    assert main(["data", "validate", "--data", str(root / "data/SYNA.csv")]) == 0
    assert "0 errors" in capsys.readouterr().out


def test_backtest_run_dsl(ws, capsys):
    root, _ = ws
    cfg = root / "cfg.json"
    cfg.write_text('{"lookback": 60}')
    out = root / "bt"
    assert main(["backtest", "run", "--data", str(root / "data/SYNA.csv"), "--strategy",
                 str(root / "strategies/rsi_tiers.afs"), "--config", str(cfg),
                 "--out", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"equity.csv", "actions.csv", "result.json"}
    printed = json.loads(capsys.readouterr().out)
    assert printed["status"] == "Success"
    assert len((out / "actions.csv").read_text().splitlines()) == 1 + 101


def test_backtest_run_adapter_and_python(ws):
    root, _ = ws
    cfg = root / "cfg.json"
    cfg.write_text('{"lookback": 60}')
    cmd = f"{sys.executable} {os.path.join(CHILDREN, 'scripted.py')} momentum"
    args = ["backtest", "run", "--data", str(root / "data/SYNA.csv"), "--config", str(cfg)]
    assert main(args + ["--adapter", cmd, "--out", str(root / "a")]) == 0
    assert main(args + ["--python", os.path.join(CHILDREN, "good_strategy.py"),
                        "--out", str(root / "b")]) == 0
    assert (root / "a/actions.csv").read_bytes() == (root / "b/actions.csv").read_bytes()
    assert main(args + ["--python", os.path.join(CHILDREN, "name_strategy.py"),
                        "--out", str(root / "c")]) == 1
    assert json.loads((root / "c/result.json").read_text())["status"] == "NameError"


def test_backtest_run_errors(ws):
    root, _ = ws
    bad = root / "bad.afs"
    bad.write_text("WHEN rsi_14 < 30 EMIT signal=1 position=0;")
    base = ["backtest", "run", "--data", str(root / "data/SYNA.csv"), "--out", str(root / "x")]
    assert main(base + ["--strategy", str(bad)]) == 2
    cfg = root / "cfg.json"
    cfg.write_text('{"lookback": 0}')
    assert main(base + ["--strategy", str(root / "strategies/rsi_tiers.afs"),
                        "--config", str(cfg)]) == 2
    assert main(base + ["--strategy", str(root / "strategies/rsi_tiers.afs")]) == 2


def test_eval_shape_and_resume(ws, capsys):
    root, manifest = ws
    assert main(["eval", "--manifest", str(manifest)]) == 0
    records = sorted((root / "runs").rglob("run*.json"))
    assert len(records) == 3 * 2 * 2
    rec = json.loads(records[0].read_text())
    assert rec["status"] == "Success" and len(rec["actions"]) == 101
    before = snapshot(root / "runs")
    capsys.readouterr()
    assert main(["eval", "--manifest", str(manifest)]) == 0
    assert capsys.readouterr().out.startswith("0 written, 12 already present")
    assert snapshot(root / "runs") == before


def test_eval_workers_match_serial(tmp_path):
    a = build(tmp_path / "a", n_bars=160, runs=2, config={"lookback": 60})
    b = build(tmp_path / "b", n_bars=160, runs=2, config={"lookback": 60})
    assert main(["eval", "--manifest", str(a)]) == 0
    assert main(["eval", "--manifest", str(b), "--workers", "4"]) == 0
    assert snapshot(tmp_path / "a/runs") == snapshot(tmp_path / "b/runs")


def test_eval_missing_strategy_is_recorded(tmp_path):
    jobs = [{"query": "q", "model": "m", "strategy": "strategies/nope.afs",
             "assets": ["SYNA", "SYNB"], "runs": 2},
            {"query": "q2", "model": "m", "strategy": "strategies/run{run}.afs",
             "assets": ["SYNA"], "runs": 2}]
    manifest = build(tmp_path, n_bars=100, config={"lookback": 30}, jobs=jobs)
    (tmp_path / "strategies/run0.afs").write_text(STRATEGIES["rsi_tiers.afs"])
    (tmp_path / "strategies/run1.afs").write_text("WHEN rsi_14 < EMIT signal=1 position=1;")
    assert main(["eval", "--manifest", str(manifest)]) == 1
    recs = {p.relative_to(tmp_path / "runs").as_posix(): json.loads(p.read_text())
            for p in (tmp_path / "runs").rglob("run*.json")}
    assert len(recs) == 6
    missing = recs["m/default/q/SYNA/run0.json"]
    assert missing["status"] == "OtherError" and "not found" in missing["error"]
    assert recs["m/default/q2/SYNA/run0.json"]["status"] == "Success"
    assert recs["m/default/q2/SYNA/run1.json"]["status"] == "SyntaxError"


@pytest.mark.parametrize("mutate", [
    lambda m: m.pop("jobs"),
    lambda m: m["jobs"].append(dict(m["jobs"][0])),
    lambda m: m["jobs"][0].update(assets=["NOPE"]),
    lambda m: m["jobs"][0].update(runs=0),
    lambda m: m["jobs"][0].update(colour="red"),
    lambda m: m.update(config={"lookback": -1}),
])
def test_eval_manifest_errors(ws, mutate, capsys):
    root, manifest = ws
    data = json.loads(manifest.read_text())
    mutate(data)
    manifest.write_text(json.dumps(data))
    assert main(["eval", "--manifest", str(manifest)]) == 2
    assert "manifest.json" in capsys.readouterr().err


def test_eval_data_dir_from_environment(ws, monkeypatch):
    root, manifest = ws
    data = json.loads(manifest.read_text())
    del data["data_dir"]
    manifest.write_text(json.dumps(data))
    monkeypatch.delenv("ALPHAFORGE_DATA", raising=False)
    assert main(["eval", "--manifest", str(manifest)]) == 2
    monkeypatch.setenv("ALPHAFORGE_DATA", str(root / "data"))
    assert main(["eval", "--manifest", str(manifest)]) == 0


def test_report(ws):
    root, manifest = ws
    main(["eval", "--manifest", str(manifest)])
    out = root / "report"
    assert main(["report", "--records", str(root / "runs"), "--out", str(out)]) == 0
    overall = list(csv.reader((out / "overall.csv").open()))
    assert overall[0] == ["model", "n", "valid", "SR", "ARR", "MDD", "CR", "SoR", "VOL"]
    assert len(overall) == 2 and overall[1][:3] == ["dsl", "12", "12"]
    levels = (out / "per_level.csv").read_text()
    assert "unstratified" in levels and "L1" in levels
    assert len(list(csv.reader((out / "per_asset.csv").open()))) == 3
    for name in ("stats_long.csv", "pass_rates.csv", "errors.csv", "summary.json"):
        assert (out / name).exists()
    assert main(["report", "--records", str(root / "runs"), "--out", str(out),
                 "--group-by", "model,query"]) == 0
    assert len((out / "overall.csv").read_text().splitlines()) == 4


def test_report_empty_store(tmp_path):
    assert main(["report", "--records", str(tmp_path), "--out", str(tmp_path / "o")]) == 2


def test_stability_analyze_store(ws):
    root, manifest = ws
    main(["eval", "--manifest", str(manifest)])
    out = root / "stab" / "report.json"
    assert main(["stability", "analyze", "--runs", str(root / "runs"), "--out", str(out),
                 "--horizon", "3"]) == 0
    rep = json.loads(out.read_text())
    assert len(rep) == 6
    group = rep["dsl/rsi_tiers/SYNA"]
    assert group["pairwise"] == [[1.0, 1.0], [1.0, 1.0]]
    assert group["mean_agreement"] == 1.0
    for suffix in ("stepwise", "pairwise", "distribution"):
        assert (root / "stab" / f"report_{suffix}.csv").exists()


def test_stability_analyze_actions_files(ws):
    root, _ = ws
    for k, name in enumerate(["rsi_tiers.afs", "breakout.afs"]):
        assert main(["backtest", "run", "--data", str(root / "data/SYNA.csv"), "--strategy",
                     str(root / "strategies" / name), "--out", str(root / f"bt/t{k}/r0"),
                     "--config", str(_cfg(root))]) == 0
    out = root / "s.json"
    assert main(["stability", "analyze", "--runs", str(root / "bt"), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())["all"]
    assert rep["temperatures"] == ["t0", "t1"]
    assert len(rep["labels"]) == 2 and rep["pairwise"][0][1] < 1.0
    assert main(["stability", "analyze", "--runs", str(root / "nothing"), "--out", str(out)]) == 2


def _cfg(root):
    cfg = root / "cfg.json"
    cfg.write_text('{"lookback": 60}')
    return cfg
