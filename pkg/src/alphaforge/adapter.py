"""Run an external strategy process over newline-delimited JSON.

Engine to child::

    {"type":"init","columns":[...],"lookback":300}
    {"type":"bar","index":i,"values":[...]}          # null for a missing value
    {"type":"end"}

Child to engine: ``{"ok":true}`` (or ``{"ok":false,"error":"Cls: msg"}``)
once after init, then ``{"signal":s,"position":p}`` after every bar.
Warm-up bars carry ``"warmup": true``; their replies are read and dropped.
"""

from __future__ import annotations

import json
import math
import os
import queue
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

from .decision import Decision, decision_problem
from .errors import AlphaForgeError, ErrorKind

STDERR_LIMIT = 64 * 1024
_TOKENS = (
    ("SyntaxError", ErrorKind.SYNTAX_ERROR),
    ("NameError", ErrorKind.NAME_ERROR),
    ("AttributeError", ErrorKind.ATTRIBUTE_ERROR),
)
_EOF = object()


class AdapterError(AlphaForgeError):
    """A strategy-process failure; ``kind`` is its place in the error taxonomy."""

    default_kind = ErrorKind.OTHER_ERROR

    def __init__(self, message: str, kind: ErrorKind | None = None, stderr: str = ""):
        super().__init__(message)
        self.kind = kind or self.default_kind
        self.stderr = stderr


class SpawnFailure(AdapterError):
    pass


class ChildCrashed(AdapterError):
    pass


class ProtocolError(AdapterError):
    default_kind = ErrorKind.PROTOCOL_ERROR


class Timeout(AdapterError):
    default_kind = ErrorKind.TIMEOUT


class StrategyRejected(AdapterError):
    """The child acknowledged init with ``ok: false``."""


def classify_error(stderr: str, exit_status: int | None = None) -> ErrorKind:
    """Map the last traceback line to SyntaxError/NameError/AttributeError, else OtherError."""
    lines = [ln for ln in (stderr or "").splitlines() if ln.strip()]
    if not lines:
        return ErrorKind.OTHER_ERROR
    last = lines[-1]
    for token, kind in _TOKENS:
        if token in last:
            return kind
    return ErrorKind.OTHER_ERROR


@dataclass(frozen=True)
class AdapterConfig:
    command: tuple[str, ...]
    step_timeout: float = 10.0
    total_timeout: float = 600.0
    max_restarts: int = 0
    lookback: int = 300
    factors: tuple[str, ...] = ()  # factor columns sent after the OHLCV columns
    cwd: str | None = None
    env: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if isinstance(self.command, str) or not self.command:
            raise ValueError("command must be a non-empty argv list")
        object.__setattr__(self, "command", tuple(str(c) for c in self.command))
        object.__setattr__(self, "factors", tuple(self.factors))
        if self.step_timeout <= 0 or self.total_timeout <= 0:
            raise ValueError("timeouts must be positive")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be >= 0")

    @classmethod
    def python_file(cls, path: str | os.PathLike, **kwargs) -> "AdapterConfig":
        """Host a Python file defining ``decide(df)`` in the bundled child runner."""
        return cls(command=(sys.executable, "-m", "alphaforge.child", os.fspath(path)), **kwargs)


def _json_value(x: float):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def parse_decision(line: str) -> Decision:
    """Strictly decode one decision reply; anything off-contract is a ProtocolError."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError:
        raise ProtocolError(f"reply is not JSON: {line[:200]!r}") from None
    if not isinstance(obj, dict) or set(obj) != {"signal", "position"}:
        raise ProtocolError(f"reply must have exactly 'signal' and 'position': {line[:200]!r}")
    problem = decision_problem(obj["signal"], obj["position"])
    if problem:
        raise ProtocolError(problem)
    return Decision(obj["signal"], float(obj["position"]))


class Session:
    """One live child process. Use :func:`handshake` to create."""

    def __init__(self, config: AdapterConfig, columns: Sequence[str]):
        self.config = config
        self.columns = list(columns)
        self._stderr: list[str] = []
        self._stderr_size = 0
        self._lines: queue.Queue = queue.Queue()
        self._deadline = time.monotonic() + config.total_timeout
        try:
            self.proc = subprocess.Popen(
                list(config.command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.PIPE, text=True, encoding="utf-8", bufsize=1,
                cwd=config.cwd, env=config.env,
            )
        except OSError as exc:
            raise SpawnFailure(f"cannot start {config.command[0]!r}: {exc}") from None
        self._threads = [
            threading.Thread(target=self._pump_stdout, daemon=True),
            threading.Thread(target=self._pump_stderr, daemon=True),
        ]
        for t in self._threads:
            t.start()

    # -- io threads
    def _pump_stdout(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _pump_stderr(self):
        for line in self.proc.stderr:
            if self._stderr_size < STDERR_LIMIT:
                self._stderr.append(line)
                self._stderr_size += len(line)

    @property
    def stderr(self) -> str:
        return "".join(self._stderr)

    def _collect_stderr(self, wait: float = 2.0) -> str:
        try:
            self.proc.wait(timeout=wait)
        except subprocess.TimeoutExpired:
            self.kill()
        self._threads[1].join(timeout=wait)
        return self.stderr

    # -- messaging
    def _send(self, obj: dict) -> None:
        try:
            self.proc.stdin.write(json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            raise self._crashed("child closed its input") from None

    def _recv(self) -> str:
        remaining = self._deadline - time.monotonic()
        wait = min(self.config.step_timeout, remaining)
        if wait <= 0:
            self.kill()
            raise Timeout("total time budget exhausted", stderr=self.stderr)
        try:
            line = self._lines.get(timeout=wait)
        except queue.Empty:
            self.kill()
            which = "step" if wait == self.config.step_timeout else "total"
            raise Timeout(f"no reply within the {which} timeout ({wait:.3g}s)",
                          stderr=self.stderr) from None
        if line is _EOF:
            raise self._crashed("child exited before replying")
        return line.rstrip("\r\n")

    def _crashed(self, what: str, cls=ChildCrashed) -> AdapterError:
        stderr = self._collect_stderr()
        status = self.proc.returncode
        return cls(f"{what} (exit status {status})", classify_error(stderr, status), stderr)

    def _ack(self) -> None:
        try:
            self._send({"type": "init", "columns": self.columns,
                        "lookback": self.config.lookback})
            line = self._recv()
        except ChildCrashed as exc:
            raise SpawnFailure(str(exc), exc.kind, exc.stderr) from None
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            obj = None
        if not isinstance(obj, dict) or not isinstance(obj.get("ok"), bool):
            self.kill()
            raise ProtocolError(f"malformed ack: {line[:200]!r}", stderr=self.stderr)
        if not obj["ok"]:
            error = str(obj.get("error", ""))
            self.kill()
            raise StrategyRejected(error or "strategy rejected init",
                                   classify_error(error), self.stderr)

    def step(self, index: int, values: Sequence[float], warmup: bool = False) -> Decision | None:
        """Send one bar; returns the validated decision (None for warm-up bars)."""
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values for {len(self.columns)} columns")
        msg = {"type": "bar", "index": int(index), "values": [_json_value(float(v)) for v in values]}
        if warmup:
            msg["warmup"] = True
        self._send(msg)
        line = self._recv()
        if warmup:
            return None
        try:
            return parse_decision(line)
        except ProtocolError as exc:
            self.kill()
            exc.stderr = self.stderr
            raise

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self._send({"type": "end"})
                self.proc.stdin.close()
                self.proc.wait(timeout=2.0)
            except (AdapterError, OSError, subprocess.TimeoutExpired):
                pass
        self.kill()

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout, self.proc.stderr):
            try:
                stream.close()
            except (OSError, ValueError):
                pass

    def __enter__(self) -> "Session":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def handshake(config: AdapterConfig, columns: Sequence[str]) -> Session:
    """Start the child and complete the init/ack exchange."""
    session = Session(config, columns)
    try:
        session._ack()
    except BaseException:
        session.kill()
        raise
    return session


class AdapterStrategy:
    """Feeds a frame's rows to a child, restarting and replaying history on crash."""

    def __init__(self, config: AdapterConfig, columns: Sequence[str]):
        self.config = config
        self.columns = list(columns)
        self.session: Session | None = None
        self.restarts = 0
        self._sent: list[tuple[int, list[float]]] = []

    def _start(self) -> None:
        self.session = handshake(self.config, self.columns)
        for index, values in self._sent:
            self.session.step(index, values, warmup=True)

    def step(self, index: int, values: Sequence[float], warmup: bool = False) -> Decision | None:
        values = list(values)
        while True:
            try:
                if self.session is None:
                    self._start()
                out = self.session.step(index, values, warmup)
                self._sent.append((index, values))
                return out
            except (ChildCrashed, Timeout):
                if self.restarts >= self.config.max_restarts:
                    raise
                self.restarts += 1
                if self.session is not None:
                    self.session.kill()
                self.session = None

    def close(self) -> None:
        if self.session is not None:
            self.session.close()
            self.session = None
