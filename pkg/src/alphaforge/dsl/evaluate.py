"""Bar-by-bar evaluation of a RuleSet against a FactorFrame.

A comparison with a not-a-value operand is false and *tainted*. Taint
propagates through AND/OR, and NOT of a tainted operand is false rather
than true, so missing data can never switch a rule on.
"""

from __future__ import annotations

import math

from ..decision import HOLD, Decision
from ..errors import AlphaForgeError
from ..factors.frame import FactorFrame
from ..marketdata import PRICE_FIELDS
from .nodes import And, BinOp, Col, Compare, Cross, Not, Num, Or, Prev, RuleSet

NAN = float("nan")


class EvaluationError(AlphaForgeError):
    pass


class IndexOutOfRange(EvaluationError, IndexError):
    pass


class MissingColumn(EvaluationError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


_COMPARE = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _value(frame: FactorFrame, name: str, index: int) -> float:
    if index < 0:
        return NAN
    try:
        return float(frame[name][index])
    except KeyError:
        raise MissingColumn(f"column {name!r} is not in the frame") from None


def _arith(node, frame: FactorFrame, index: int) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Col):
        return _value(frame, node.name, index)
    if isinstance(node, Prev):
        return _value(frame, node.name, index - node.k)
    a, b = _arith(node.left, frame, index), _arith(node.right, frame, index)
    if node.op == "+":
        out = a + b
    elif node.op == "-":
        out = a - b
    elif node.op == "*":
        out = a * b
    else:
        out = a / b if b != 0 else NAN
    return out if math.isfinite(out) else NAN


def _cross(node: Cross, frame: FactorFrame, index: int) -> tuple[bool, bool]:
    a = _value(frame, node.left.name, index)
    a_prev = _value(frame, node.left.name, index - 1)
    if isinstance(node.right, Num):
        b = b_prev = node.right.value
    else:
        b = _value(frame, node.right.name, index)
        b_prev = _value(frame, node.right.name, index - 1)
    if any(math.isnan(v) for v in (a, a_prev, b, b_prev)):
        return False, True
    if node.direction == "above":
        return a_prev <= b_prev and a > b, False
    return a_prev >= b_prev and a < b, False


def truth(node, frame: FactorFrame, index: int) -> tuple[bool, bool]:
    """(value, tainted) for a boolean node at ``index``."""
    if isinstance(node, Compare):
        a, b = _arith(node.left, frame, index), _arith(node.right, frame, index)
        if math.isnan(a) or math.isnan(b):
            return False, True
        return _COMPARE[node.op](a, b), False
    if isinstance(node, Cross):
        return _cross(node, frame, index)
    if isinstance(node, Not):
        value, tainted = truth(node.operand, frame, index)
        return (False, True) if tainted else (not value, False)
    if isinstance(node, (And, Or)):
        parts = [truth(item, frame, index) for item in node.items]
        combine = all if isinstance(node, And) else any
        return combine(v for v, _ in parts), any(t for _, t in parts)
    raise TypeError(f"not a boolean node: {node!r}")


def evaluate(ruleset: RuleSet, frame: FactorFrame, index: int) -> Decision:
    """Decision of the first rule whose condition holds at ``index``; HOLD if none."""
    if not 0 <= index < len(frame):
        raise IndexOutOfRange(f"index {index} outside frame of {len(frame)} bars")
    for name in ruleset.columns:
        if name not in frame:
            raise MissingColumn(f"column {name!r} is not in the frame")
    for rule in ruleset.rules:
        if truth(rule.condition, frame, index)[0]:
            return Decision(rule.signal, rule.position)
    return HOLD


def required_factors(ruleset: RuleSet) -> list[str]:
    """Sorted, deduplicated non-OHLCV columns the ruleset reads."""
    return sorted(set(ruleset.columns) - set(PRICE_FIELDS))


def required_history(ruleset: RuleSet) -> int:
    """Largest prev()/cross offset used; rows this far back must be valid."""
    deepest = 0

    def walk(node):
        nonlocal deepest
        if isinstance(node, Prev):
            deepest = max(deepest, node.k)
        elif isinstance(node, Cross):
            deepest = max(deepest, 1)
        elif isinstance(node, (BinOp, Compare)):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Not):
            walk(node.operand)
        elif isinstance(node, (And, Or)):
            for item in node.items:
                walk(item)

    for rule in ruleset.rules:
        walk(rule.condition)
    return deepest
