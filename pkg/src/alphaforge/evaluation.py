"""Batch evaluation: manifest loading and the resumable run-record writer."""

from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

from .adapter import AdapterConfig
from .aggregate import RunRecord, record_path, write_record
from .backtest import BacktestConfig, ConfigError, run
from .dsl import DslSyntaxError, InconsistentSignalPosition, UnknownColumn, parse_file
from .errors import AlphaForgeError, ErrorKind
from .factors import FactorNameError
from .marketdata import InsufficientHistory, MarketDataError, OhlcvSeries, load_csv

DATA_ENV = "ALPHAFORGE_DATA"
_JOB_KEYS = {"query", "model", "temperature", "strategy", "assets", "runs", "level", "grade",
             "factors", "step_timeout"}


class ManifestError(AlphaForgeError, ValueError):
    def __init__(self, path: str, field_: str, message: str):
        self.path, self.field = path, field_
        super().__init__(f"{path}: {field_}: {message}")


@dataclass(frozen=True)
class Job:
    query: str
    model: str
    temperature: str
    strategy: Union[str, list, dict]
    assets: tuple[str, ...]
    runs: int = 5
    level: Optional[str] = None
    grade: Optional[str] = None
    factors: tuple[str, ...] = ()
    step_timeout: float = 10.0

    def strategy_for(self, run: int) -> Union[str, dict]:
        if isinstance(self.strategy, list):
            return self.strategy[run]
        if isinstance(self.strategy, str):
            return self.strategy.replace("{run}", str(run))
        return self.strategy


@dataclass
class Manifest:
    path: str
    data_dir: str
    store: str
    config: BacktestConfig
    jobs: list[Job] = field(default_factory=list)

    def resolve(self, relative: str) -> str:
        return os.path.join(os.path.dirname(os.path.abspath(self.path)), relative)


def load_manifest(path: str, store: str | None = None, data_dir: str | None = None) -> Manifest:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ManifestError(path, "file", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ManifestError(path, "json", str(exc)) from None
    if not isinstance(raw, dict):
        raise ManifestError(path, "root", "must be a JSON object")
    unknown = set(raw) - {"data_dir", "store", "config", "jobs"}
    if unknown:
        raise ManifestError(path, ",".join(sorted(unknown)), "unknown field")
    base = os.path.dirname(os.path.abspath(path))
    data_dir = data_dir or raw.get("data_dir") or os.environ.get(DATA_ENV)
    if not data_dir:
        raise ManifestError(path, "data_dir", f"missing (set it or ${DATA_ENV})")
    try:
        config = BacktestConfig.from_json(raw.get("config", {}))
    except ConfigError as exc:
        raise ManifestError(path, "config", str(exc)) from None
    manifest = Manifest(path, os.path.join(base, data_dir),
                        store or os.path.join(base, raw.get("store", "runs")), config)
    jobs = raw.get("jobs")
    if not isinstance(jobs, list) or not jobs:
        raise ManifestError(path, "jobs", "must be a non-empty list")
    seen = set()
    for i, spec in enumerate(jobs):
        manifest.jobs.append(_job(path, i, spec))
        key = (manifest.jobs[-1].query, manifest.jobs[-1].model, manifest.jobs[-1].temperature)
        if key in seen:
            raise ManifestError(path, f"jobs[{i}]", f"duplicate job {key}")
        seen.add(key)
    for job in manifest.jobs:
        for asset in job.assets:
            if not os.path.isfile(asset_path(manifest, asset)):
                raise ManifestError(path, "assets", f"no data file for {asset!r} in {manifest.data_dir}")
    return manifest


def _job(path: str, i: int, spec) -> Job:
    where = f"jobs[{i}]"
    if not isinstance(spec, dict):
        raise ManifestError(path, where, "must be an object")
    unknown = set(spec) - _JOB_KEYS
    if unknown:
        raise ManifestError(path, f"{where}.{sorted(unknown)[0]}", "unknown field")
    for name in ("query", "model", "strategy", "assets"):
        if name not in spec:
            raise ManifestError(path, f"{where}.{name}", "required")
    runs = spec.get("runs", 5)
    if not isinstance(runs, int) or runs < 1:
        raise ManifestError(path, f"{where}.runs", "must be a positive integer")
    strategy = spec["strategy"]
    if isinstance(strategy, list):
        if len(strategy) < runs or not all(isinstance(s, str) for s in strategy):
            raise ManifestError(path, f"{where}.strategy", f"list needs {runs} file paths")
    elif isinstance(strategy, dict):
        if set(strategy) != {"adapter"} or not isinstance(strategy["adapter"], list) \
                or not strategy["adapter"]:
            raise ManifestError(path, f"{where}.strategy", 'object form is {"adapter": [argv...]}')
    elif not isinstance(strategy, str):
        raise ManifestError(path, f"{where}.strategy", "must be a path, list or adapter object")
    assets = spec["assets"]
    if not isinstance(assets, list) or not assets or not all(isinstance(a, str) for a in assets):
        raise ManifestError(path, f"{where}.assets", "must be a non-empty list of names")
    return Job(
        query=str(spec["query"]), model=str(spec["model"]),
        temperature=str(spec.get("temperature", "default")), strategy=strategy,
        assets=tuple(assets), runs=runs, level=spec.get("level"), grade=spec.get("grade"),
        factors=tuple(spec.get("factors", ())), step_timeout=float(spec.get("step_timeout", 10.0)),
    )


def asset_path(manifest: Manifest, asset: str) -> str:
    return os.path.join(manifest.data_dir, f"{asset}.csv")


# -- running ------------------------------------------------------------------------------

_DSL_FAILURES = (
    (DslSyntaxError, ErrorKind.SYNTAX_ERROR),
    (UnknownColumn, ErrorKind.NAME_ERROR),
    (InconsistentSignalPosition, ErrorKind.OTHER_ERROR),
)


def _strategy(manifest: Manifest, job: Job, run_index: int):
    """The runnable strategy for one run, or an (ErrorKind, message) failure."""
    source = job.strategy_for(run_index)
    if isinstance(source, dict):
        return AdapterConfig(command=tuple(source["adapter"]), factors=job.factors,
                             lookback=manifest.config.lookback, step_timeout=job.step_timeout,
                             cwd=os.path.dirname(os.path.abspath(manifest.path))), str(source)
    path = manifest.resolve(source)
    if not os.path.isfile(path):
        return (ErrorKind.OTHER_ERROR, f"FileNotFoundError: strategy file {source!r} not found"), source
    if path.endswith(".py"):
        return AdapterConfig.python_file(path, factors=job.factors,
                                         lookback=manifest.config.lookback,
                                         step_timeout=job.step_timeout), source
    try:
        return parse_file(path), source
    except tuple(cls for cls, _ in _DSL_FAILURES) as exc:
        kind = next(k for cls, k in _DSL_FAILURES if isinstance(exc, cls))
        return (kind, f"{type(exc).__name__}: {exc}"), source


@dataclass
class EvalSummary:
    written: int = 0
    skipped: int = 0
    failed: int = 0  # records (new or existing) whose status is not Success
    total: int = 0

    @property
    def exit_code(self) -> int:
        return 0 if self.failed == 0 else 1


def run_eval(manifest: Manifest, workers: int = 1) -> EvalSummary:
    """Write one record per (job, asset, run); existing records are kept."""
    summary = EvalSummary()
    lock = threading.Lock()
    series_cache: dict[str, OhlcvSeries] = {}

    def series_for(asset: str) -> OhlcvSeries:
        with lock:
            if asset not in series_cache:
                series_cache[asset] = load_csv(asset_path(manifest, asset), symbol=asset)
            return series_cache[asset]

    tasks = [(job, asset, k) for job in manifest.jobs for asset in job.assets
             for k in range(job.runs)]
    summary.total = len(tasks)

    def one(task) -> None:
        job, asset, k = task
        path = record_path(manifest.store, job.model, job.temperature, job.query, asset, k)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                ok = json.load(fh).get("status") == ErrorKind.SUCCESS.value
            with lock:
                summary.skipped += 1
                summary.failed += not ok
            return
        record = evaluate_one(manifest, job, asset, k, series_for)
        write_record(manifest.store, record)
        with lock:
            summary.written += 1
            summary.failed += record.status is not ErrorKind.SUCCESS

    if workers <= 1:
        for task in tasks:
            one(task)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, tasks))
    return summary


def evaluate_one(manifest: Manifest, job: Job, asset: str, k: int, series_for) -> RunRecord:
    base = dict(query=job.query, model=job.model, asset=asset, temperature=job.temperature,
                run=k, level=job.level, grade=job.grade)
    strategy, source = _strategy(manifest, job, k)
    if isinstance(strategy, tuple):
        kind, message = strategy
        return RunRecord(status=kind, error=message, strategy=source, **base)
    try:
        series = series_for(asset)
        result = run(series, strategy, manifest.config)
    except (InsufficientHistory, MarketDataError, FactorNameError) as exc:
        return RunRecord(status=ErrorKind.OTHER_ERROR, error=f"{type(exc).__name__}: {exc}",
                         strategy=source, **base)
    return RunRecord(
        status=result.status, error=result.error, strategy=source,
        metrics=result.metrics if result.ok else None,
        actions=result.actions, equity=result.equity, warnings=result.warnings, **base,
    )
