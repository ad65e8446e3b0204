from __future__ import annotations

import math
from dataclasses import dataclass

SIGNALS = (1, -1, 0)


@dataclass(frozen=True)
class Decision:
    """One bar's strategy output: ``signal`` in {1, -1, 0}, target ``position`` in [0, 1]."""

    signal: int
    position: float

    def to_json(self) -> dict:
        return {"signal": self.signal, "position": self.position}


HOLD = Decision(0, 0.0)


def decision_problem(signal, position) -> str | None:
    """Why a raw (signal, position) pair is outside the contract, or None if valid."""
    if isinstance(signal, bool) or not isinstance(signal, int):
        return f"signal must be an integer, got {signal!r}"
    if signal not in SIGNALS:
        return f"signal must be one of 1, -1, 0, got {signal}"
    if isinstance(position, bool) or not isinstance(position, (int, float)):
        return f"position must be a number, got {position!r}"
    if not math.isfinite(position) or not 0.0 <= position <= 1.0:
        return f"position must lie in [0, 1], got {position!r}"
    return None
