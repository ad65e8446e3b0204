"""Run records, the on-disk record store, and the aggregate tables built from them."""

from __future__ import annotations

import csv
import json
import math
import os
import re
import tempfile
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from statistics import fmean, variance
from typing import Iterable, Optional, Sequence

from .errors import AlphaForgeError, ErrorKind
from .metrics import MetricsReport

# display name -> MetricsReport attribute, in table order
TABLE_METRICS = {"SR": "sr", "ARR": "arr", "MDD": "mdd", "CR": "cr", "SoR": "sor", "VOL": "vol"}
GROUP_KEYS = ("query", "model", "asset", "temperature", "level", "grade", "run")
UNSTRATIFIED = "unstratified"


class AggregateError(AlphaForgeError, ValueError):
    pass


class InsufficientRuns(AggregateError):
    pass


class EmptyStore(AggregateError):
    pass


@dataclass
class RunRecord:
    query: str
    model: str
    asset: str
    temperature: str
    run: int
    status: ErrorKind
    metrics: Optional[MetricsReport] = None
    level: Optional[str] = None
    grade: Optional[str] = None
    error: str = ""
    strategy: str = ""
    actions: list[int] = field(default_factory=list)
    equity: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.status = ErrorKind(self.status)
        if (self.metrics is not None) != (self.status is ErrorKind.SUCCESS):
            raise AggregateError("metrics must be present exactly when the run succeeded")

    @property
    def key(self) -> tuple:
        return (self.query, self.model, self.asset, self.temperature, self.run)

    def label(self, name: str) -> str:
        if name not in GROUP_KEYS:
            raise AggregateError(f"cannot group by {name!r}; choose from {', '.join(GROUP_KEYS)}")
        value = getattr(self, name)
        if value is None or value == "":
            return UNSTRATIFIED
        return str(value)

    def to_json(self) -> dict:
        return {
            "query": self.query,
            "model": self.model,
            "asset": self.asset,
            "temperature": self.temperature,
            "run": self.run,
            "level": self.level,
            "grade": self.grade,
            "status": self.status.value,
            "error": self.error,
            "strategy": self.strategy,
            "metrics": self.metrics.to_json() if self.metrics else None,
            "actions": list(self.actions),
            "equity": list(self.equity),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunRecord":
        data = dict(data)
        metrics = data.pop("metrics", None)
        return cls(metrics=MetricsReport.from_json(metrics) if metrics else None,
                   **{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


# -- record store -----------------------------------------------------------------------

_UNSAFE = re.compile(r"[^A-Za-z0-9._=+-]")


def _component(text: str) -> str:
    safe = _UNSAFE.sub("_", str(text))
    return safe if safe not in ("", ".", "..") else f"_{safe}_"


def record_path(root: str | os.PathLike, model: str, temperature: str, query: str,
                asset: str, run: int) -> str:
    return os.path.join(root, _component(model), _component(temperature), _component(query),
                        _component(asset), f"run{int(run)}.json")


def write_record(root: str | os.PathLike, record: RunRecord) -> str:
    """Atomically write one record (temp file in the same directory, then rename)."""
    path = record_path(root, record.model, record.temperature, record.query, record.asset,
                       record.run)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(record.to_json(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_records(root: str | os.PathLike) -> list[RunRecord]:
    records = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            if re.fullmatch(r"run\d+\.json", name):
                with open(os.path.join(dirpath, name), encoding="utf-8") as fh:
                    records.append(RunRecord.from_json(json.load(fh)))
    if not records:
        raise EmptyStore(f"no run records under {os.fspath(root)!r}")
    return records


# -- statistics -------------------------------------------------------------------------

@dataclass
class MetricStats:
    mean: Optional[float]
    std: Optional[float]
    count: int  # defined values used
    excluded: int  # successful records whose value was undefined

    @property
    def single(self) -> bool:
        return self.count == 1

    def cell(self, digits: int = 4) -> str:
        if self.mean is None:
            return "n/a"
        return f"{self.mean:.{digits}f}±{self.std:.{digits}f}"


@dataclass
class GroupStats:
    key: tuple
    n: int
    valid: int
    metrics: dict[str, MetricStats]

    @property
    def invalid(self) -> int:
        return self.n - self.valid


def _stats(values: list[float], excluded: int) -> MetricStats:
    if not values:
        return MetricStats(None, None, 0, excluded)
    if len(values) == 1:
        return MetricStats(values[0], 0.0, 1, excluded)
    return MetricStats(fmean(values), math.sqrt(variance(values)), len(values), excluded)


def _sorted_records(records: Iterable[RunRecord]) -> list[RunRecord]:
    # a canonical order makes every aggregate independent of input order
    return sorted(records, key=lambda r: tuple(str(x) for x in r.key))


def group_stats(records: Iterable[RunRecord], group_by: Sequence[str]) -> list[GroupStats]:
    """Mean and sample std of each table metric per group, over defined values only."""
    groups: dict[tuple, list[RunRecord]] = defaultdict(list)
    for rec in _sorted_records(records):
        groups[tuple(rec.label(k) for k in group_by)].append(rec)
    out = []
    for key in sorted(groups):
        members = groups[key]
        valid = [r for r in members if r.status is ErrorKind.SUCCESS]
        stats = {}
        for name, attr in TABLE_METRICS.items():
            values = [getattr(r.metrics, attr) for r in valid]
            defined = [v for v in values if v is not None]
            stats[name] = _stats(defined, len(values) - len(defined))
        out.append(GroupStats(key, len(members), len(valid), stats))
    return out


def _run_success(records: Sequence[RunRecord]) -> dict[tuple, dict[int, bool]]:
    """Per (query, model, temperature): run index -> every asset of that run succeeded."""
    out: dict[tuple, dict[int, bool]] = defaultdict(dict)
    for rec in records:
        runs = out[(rec.query, rec.model, rec.temperature)]
        runs[rec.run] = runs.get(rec.run, True) and rec.status is ErrorKind.SUCCESS
    return out


def pass_at_k(records: Iterable[RunRecord], k: int) -> float:
    """Pass@1 is the per-record success rate; Pass@k for k > 1 is the share of
    (query, model, temperature) groups with a successful run among their first k."""
    records = list(records)
    if k < 1:
        raise AggregateError("k must be >= 1")
    if not records:
        raise AggregateError("no records")
    if k == 1:
        return sum(r.status is ErrorKind.SUCCESS for r in records) / len(records)
    groups = _run_success(records)
    passed = 0
    for key, runs in sorted(groups.items()):
        if len(runs) < k:
            raise InsufficientRuns(f"group {key} has {len(runs)} runs, need {k}")
        passed += any(runs[r] for r in sorted(runs)[:k])
    return passed / len(groups)


@dataclass
class VarianceDecomposition:
    sigma2_run: Optional[float]
    sigma2_query: Optional[float]
    groups: int


def variance_decomposition(records: Iterable[RunRecord], metric: str,
                           group_by: Sequence[str] = ("model", "temperature", "query", "asset"),
                           ) -> VarianceDecomposition:
    """Within-group (run-to-run) and between-group (query-to-query) variance of a metric."""
    attr = TABLE_METRICS.get(metric, metric)
    groups: dict[tuple, list[float]] = defaultdict(list)
    for rec in _sorted_records(records):
        if rec.status is ErrorKind.SUCCESS:
            value = getattr(rec.metrics, attr)
            if value is not None:
                groups[tuple(rec.label(k) for k in group_by)].append(value)
    within = [variance(v) for _, v in sorted(groups.items()) if len(v) >= 2]
    means = [fmean(v) for _, v in sorted(groups.items())]
    return VarianceDecomposition(
        sigma2_run=fmean(within) if within else None,
        sigma2_query=variance(means) if len(means) >= 2 else None,
        groups=len(groups),
    )


def error_histogram(records: Iterable[RunRecord]) -> dict:
    """Counts per reported error bucket for each (model, temperature) and in total."""
    buckets = [k.value for k in ErrorKind.reported()]
    per: dict[tuple, Counter] = defaultdict(Counter)
    total: Counter = Counter()
    for rec in records:
        kind = rec.status.folded().value
        per[(rec.model, rec.temperature)][kind] += 1
        total[kind] += 1
    return {
        "groups": {key: {b: per[key][b] for b in buckets} for key in sorted(per)},
        "total": {b: total[b] for b in buckets},
    }


# -- report files -----------------------------------------------------------------------

def _write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _num(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def write_report(records: Sequence[RunRecord], out_dir: str | os.PathLike,
                 group_by: Sequence[str] = ("model",), k: int = 5) -> dict:
    """Stratified tables (overall, per asset, per level), pass rates, errors and a summary."""
    if not records:
        raise EmptyStore("no records to report")
    os.makedirs(out_dir, exist_ok=True)
    group_by = list(group_by)
    tables = {
        "overall": group_by,
        "per_asset": group_by + ([] if "asset" in group_by else ["asset"]),
        "per_level": group_by + ([] if "level" in group_by else ["level"]),
    }
    long_rows = []
    summary: dict = {"records": len(records), "group_by": group_by, "tables": {}}
    for name, keys in tables.items():
        stats = group_stats(records, keys)
        _write_csv(
            os.path.join(out_dir, f"{name}.csv"),
            [*keys, "n", "valid", *TABLE_METRICS],
            ([*g.key, g.n, g.valid, *(g.metrics[m].cell() for m in TABLE_METRICS)]
             for g in stats),
        )
        for g in stats:
            for m, s in g.metrics.items():
                long_rows.append([name, "/".join(g.key), m, _num(s.mean), _num(s.std),
                                  s.count, s.excluded, int(s.single)])
        summary["tables"][name] = [
            {"key": dict(zip(keys, g.key)), "n": g.n, "valid": g.valid,
             "metrics": {m: {"mean": s.mean, "std": s.std, "count": s.count,
                             "excluded": s.excluded} for m, s in g.metrics.items()}}
            for g in stats
        ]
    _write_csv(os.path.join(out_dir, "stats_long.csv"),
               ["table", "group", "metric", "mean", "std", "count", "excluded", "single"],
               long_rows)

    by_mt: dict[tuple, list[RunRecord]] = defaultdict(list)
    for rec in records:
        by_mt[(rec.model, rec.temperature)].append(rec)
    pass_rows = []
    for key in sorted(by_mt):
        try:
            pk = pass_at_k(by_mt[key], k)
        except InsufficientRuns:
            pk = None
        pass_rows.append([*key, len(by_mt[key]), _num(pass_at_k(by_mt[key], 1)), _num(pk)])
    _write_csv(os.path.join(out_dir, "pass_rates.csv"),
               ["model", "temperature", "records", "pass@1", f"pass@{k}"], pass_rows)

    hist = error_histogram(records)
    buckets = list(hist["total"])
    _write_csv(os.path.join(out_dir, "errors.csv"), ["model", "temperature", *buckets, "total"],
               [[*key, *counts.values(), sum(counts.values())]
                for key, counts in hist["groups"].items()]
               + [["all", "all", *hist["total"].values(), sum(hist["total"].values())]])

    try:
        overall_pk = pass_at_k(records, k)
    except InsufficientRuns:
        overall_pk = None
    summary["pass@1"] = pass_at_k(records, 1)
    summary[f"pass@{k}"] = overall_pk
    summary["errors"] = hist["total"]
    summary["variance"] = {}
    for m in TABLE_METRICS:
        vd = variance_decomposition(records, m)
        summary["variance"][m] = {"sigma2_run": vd.sigma2_run, "sigma2_query": vd.sigma2_query}
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
