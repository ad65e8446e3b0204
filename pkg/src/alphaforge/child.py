"""Child-side runner hosting a Python strategy file.

    python -m alphaforge.child strategy.py

The file must define ``decide(df)`` returning ``{"signal": int, "position": float}``.
``df`` is a pandas DataFrame of the most recent ``lookback`` bars with one
column per engine column; ``df.iloc[-1]`` is the current bar. Load errors are
reported in the init ack; an exception inside ``decide`` prints a traceback
and exits non-zero so the engine can classify it.
"""

from __future__ import annotations

import json
import sys
import traceback
from collections import deque

import pandas as pd


def _plain(value):
    return value.item() if hasattr(value, "item") else value


def _reply(obj) -> None:
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def _load(path: str):
    with open(path, encoding="utf-8") as fh:
        source = fh.read()
    namespace = {"__name__": "strategy", "__file__": path}
    exec(compile(source, path, "exec"), namespace)
    if "decide" not in namespace:
        raise NameError("name 'decide' is not defined")
    return namespace["decide"]


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python -m alphaforge.child STRATEGY.py", file=sys.stderr)
        return 2
    header = json.loads(sys.stdin.readline())
    columns = header["columns"]
    history: deque = deque(maxlen=int(header.get("lookback", 300)))
    try:
        decide = _load(argv[0])
    except BaseException as exc:  # noqa: BLE001 - reported to the engine
        _reply({"ok": False, "error": f"{type(exc).__name__}: {exc}"})
        return 1
    _reply({"ok": True})
    for line in sys.stdin:
        msg = json.loads(line)
        if msg.get("type") == "end":
            break
        history.append([float("nan") if v is None else v for v in msg["values"]])
        if msg.get("warmup"):
            _reply({"signal": 0, "position": 0.0})
            continue
        df = pd.DataFrame(list(history), columns=columns)
        try:
            out = decide(df)
            _reply({k: _plain(v) for k, v in dict(out).items()})
        except Exception:
            traceback.print_exc()
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
