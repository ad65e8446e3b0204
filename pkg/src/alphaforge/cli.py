"""Command-line entry point: ``alphaforge <command> ...``.

Exit codes: 0 success, 1 recorded strategy failures, 2 usage, manifest or
config errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shlex
import sys
from collections import defaultdict

from . import __version__
from .adapter import AdapterConfig
from .aggregate import AggregateError, load_records, write_report
from .backtest import BacktestConfig, ConfigError, run, write_outputs
from .dsl import DslError, parse_file
from .errors import AlphaForgeError
from .evaluation import ManifestError, load_manifest, run_eval
from .factors import compute_frame, write_factor_csv
from .marketdata import load_csv, validate
from .stability import RunBundle, StabilityError, analyze

log = logging.getLogger("alphaforge")

EXIT_OK, EXIT_FAILURES, EXIT_USAGE = 0, 1, 2


def _split(text: str | None) -> list[str]:
    return [x.strip() for x in (text or "").split(",") if x.strip()]


def _load_config(path: str | None) -> BacktestConfig:
    if not path:
        return BacktestConfig()
    with open(path, encoding="utf-8") as fh:
        return BacktestConfig.from_json(json.load(fh))


# -- commands ---------------------------------------------------------------------------

def cmd_factors_compute(args) -> int:
    series = load_csv(args.data)
    names = _split(args.factors)
    frame = compute_frame(series, names)
    write_factor_csv(frame, names, args.out)
    log.info("wrote %d factor columns for %d bars to %s", len(names), len(series), args.out)
    return EXIT_OK


def cmd_data_validate(args) -> int:
    report = validate(load_csv(args.data), strict=args.strict)
    for f in report.findings:
        print(f"bar {f.index}: {f.level}: {f.message}")
    print(f"{len(report.errors)} errors, {len(report.warnings)} warnings")
    return EXIT_OK if report.ok else EXIT_FAILURES


def cmd_backtest_run(args) -> int:
    config = _load_config(args.config)
    series = load_csv(args.data)
    factors = tuple(_split(args.factors))
    if args.strategy:
        strategy = parse_file(args.strategy)
    elif args.python:
        strategy = AdapterConfig.python_file(args.python, factors=factors,
                                             lookback=config.lookback,
                                             step_timeout=args.step_timeout)
    else:
        strategy = AdapterConfig(command=tuple(shlex.split(args.adapter)), factors=factors,
                                 lookback=config.lookback, step_timeout=args.step_timeout)
    result = run(series, strategy, config)
    write_outputs(result, args.out)
    if not result.ok:
        print(f"strategy failed: {result.error}", file=sys.stderr)
        return EXIT_FAILURES
    m = result.metrics
    print(json.dumps({"status": result.status.value, "n_trades": result.n_trades,
                      **{k: v for k, v in m.to_json().items() if k != "undefined"}}))
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest, store=args.store, data_dir=args.data_dir)
    summary = run_eval(manifest, workers=args.workers)
    print(f"{summary.written} written, {summary.skipped} already present, "
          f"{summary.failed} failed of {summary.total} records in {manifest.store}")
    return summary.exit_code


def _collect_sequences(root: str) -> dict[str, list[tuple[str, int, str, list[int]]]]:
    """Groups of (label, run, temperature, actions) found under ``root``."""
    groups: dict[str, list] = defaultdict(list)
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            rel = os.path.relpath(path, root)
            if name == "actions.csv":
                with open(path, newline="", encoding="utf-8") as fh:
                    actions = [int(row["signal"]) for row in csv.DictReader(fh)]
                parts = rel.split(os.sep)
                temp = parts[0] if len(parts) > 2 else ""
                groups["all"].append((os.path.dirname(rel), len(groups["all"]), temp, actions))
            elif name.startswith("run") and name.endswith(".json"):
                with open(path, encoding="utf-8") as fh:
                    rec = json.load(fh)
                if not rec.get("actions"):
                    continue
                key = f"{rec['model']}/{rec['query']}/{rec['asset']}"
                label = f"t{rec['temperature']}/run{rec['run']}"
                groups[key].append((label, rec["run"], str(rec["temperature"]), rec["actions"]))
    return groups


def cmd_stability_analyze(args) -> int:
    groups = _collect_sequences(args.runs)
    if not groups:
        print(f"no action sequences under {args.runs}", file=sys.stderr)
        return EXIT_USAGE
    report = {}
    stem = os.path.splitext(args.out)[0]
    step_rows, pair_rows, dist_rows = [], [], []
    for key in sorted(groups):
        items = groups[key]
        bundle = RunBundle([a for *_, a in items], [r for _, r, _, _ in items],
                           [t for _, _, t, _ in items])
        rep = analyze(bundle, labels=[lab for lab, *_ in items], mode=args.mode,
                      horizon=args.horizon).to_json()
        report[key] = rep
        for t, v in enumerate(rep["stepwise"] or []):
            step_rows.append([key, t, repr(v)])
        for i, a in enumerate(rep["labels"]):
            for j, b in enumerate(rep["labels"]):
                pair_rows.append([key, a, b, repr(rep["pairwise"][i][j])])
            d = rep["distributions"][i]
            dist_rows.append([key, a, repr(d["buy"]), repr(d["hold"]), repr(d["sell"]),
                              repr(rep["flip_rates"][i])])
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for suffix, header, rows in (
        ("stepwise", ["group", "step", "agreement"], step_rows),
        ("pairwise", ["group", "a", "b", "agreement"], pair_rows),
        ("distribution", ["group", "run", "buy", "hold", "sell", "flip_rate"], dist_rows),
    ):
        with open(f"{stem}_{suffix}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    print(f"analyzed {sum(len(v) for v in groups.values())} sequences in {len(groups)} groups")
    return EXIT_OK


def cmd_report(args) -> int:
    records = load_records(args.records)
    summary = write_report(records, args.out, _split(args.group_by) or ["model"], k=args.k)
    print(json.dumps({"records": summary["records"], "pass@1": summary["pass@1"],
                      f"pass@{args.k}": summary[f"pass@{args.k}"]}))
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alphaforge", description="Factor, backtest and evaluation engine")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    fac = sub.add_parser("factors", help="factor columns").add_subparsers(dest="action", required=True)
    c = fac.add_parser("compute", help="compute factor columns for one CSV")
    c.add_argument("--data", "--input", dest="data", required=True)
    c.add_argument("--factors", "--names", dest="factors", required=True,
                   help="comma-separated names, e.g. rsi_14,ema_20")
    c.add_argument("--out", "--output", dest="out", required=True)
    c.set_defaults(func=cmd_factors_compute)

    data = sub.add_parser("data", help="market data").add_subparsers(dest="action", required=True)
    v = data.add_parser("validate", help="check an OHLCV CSV")
    v.add_argument("--data", required=True)
    v.add_argument("--strict", action="store_true")
    v.set_defaults(func=cmd_data_validate)

    bt = sub.add_parser("backtest", help="single backtests").add_subparsers(dest="action", required=True)
    r = bt.add_parser("run", help="backtest one strategy on one asset")
    r.add_argument("--data", required=True)
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--strategy", help=".afs rule file")
    src.add_argument("--adapter", help="strategy process command line")
    src.add_argument("--python", help="Python file defining decide(df)")
    r.add_argument("--factors", help="extra columns sent to an adapter")
    r.add_argument("--config", help="JSON backtest config")
    r.add_argument("--step-timeout", type=float, default=10.0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_backtest_run)

    e = sub.add_parser("eval", help="batch evaluation from a manifest")
    e.add_argument("--manifest", required=True)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--store", help="record store directory (default: manifest 'store')")
    e.add_argument("--data-dir", help="override the manifest data directory")
    e.set_defaults(func=cmd_eval)

    st = sub.add_parser("stability", help="decision stability").add_subparsers(dest="action", required=True)
    a = st.add_parser("analyze", help="agreement and flip analytics over repeated runs")
    a.add_argument("--runs", required=True, help="directory of actions.csv files or run records")
    a.add_argument("--out", required=True)
    a.add_argument("--mode", choices=("modal", "jaccard"), default="modal")
    a.add_argument("--horizon", type=int, default=1)
    a.set_defaults(func=cmd_stability_analyze)

    rep = sub.add_parser("report", help="aggregate tables from a record store")
    rep.add_argument("--records", required=True)
    rep.add_argument("--out", required=True)
    rep.add_argument("--group-by", default="model")
    rep.add_argument("--k", type=int, default=5)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ManifestError, ConfigError, DslError, AggregateError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AlphaForgeError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
