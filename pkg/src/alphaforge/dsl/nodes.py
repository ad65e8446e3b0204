"""Rule AST and its canonical printer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

ARITH_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
COMPARATORS = ("<", "<=", ">", ">=", "==", "!=")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Prev:
    name: str
    k: int = 1


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Arith"
    right: "Arith"


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Arith"
    right: "Arith"


@dataclass(frozen=True)
class Cross:
    direction: str  # "above" | "below"
    left: Col
    right: Union[Col, Num]


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


Arith = Union[Num, Col, Prev, BinOp]
Expr = Union[Compare, Cross, Not, And, Or]


@dataclass(frozen=True)
class Rule:
    condition: Expr
    signal: int
    position: float


@dataclass(frozen=True)
class RuleSet:
    rules: tuple = ()
    name: str = field(default="", compare=False)
    description: str = field(default="", compare=False)

    @property
    def columns(self) -> list[str]:
        """Every column referenced, in first-use order."""
        seen: dict[str, None] = {}
        for rule in self.rules:
            for name in referenced_columns(rule.condition):
                seen.setdefault(name, None)
        return list(seen)

    def __len__(self) -> int:
        return len(self.rules)


def referenced_columns(node) -> list[str]:
    if isinstance(node, (Col, Prev)):
        return [node.name]
    if isinstance(node, Num):
        return []
    if isinstance(node, (BinOp, Compare)):
        return referenced_columns(node.left) + referenced_columns(node.right)
    if isinstance(node, Cross):
        return referenced_columns(node.left) + referenced_columns(node.right)
    if isinstance(node, Not):
        return referenced_columns(node.operand)
    if isinstance(node, (And, Or)):
        return [n for item in node.items for n in referenced_columns(item)]
    raise TypeError(f"not a rule node: {node!r}")


# -- printing -----------------------------------------------------------------------

def _num(value: float) -> str:
    return repr(float(value))


def format_arith(node, parent_prec: int = 0, right_side: bool = False) -> str:
    if isinstance(node, Num):
        return _num(node.value)
    if isinstance(node, Col):
        return node.name
    if isinstance(node, Prev):
        return f"prev({node.name})" if node.k == 1 else f"prev({node.name}, {node.k})"
    if isinstance(node, BinOp):
        prec = ARITH_PREC[node.op]
        text = (f"{format_arith(node.left, prec)} {node.op} "
                f"{format_arith(node.right, prec, right_side=True)}")
        if prec < parent_prec or (right_side and prec == parent_prec):
            return f"({text})"
        return text
    raise TypeError(f"not an arithmetic node: {node!r}")


def format_expr(node, context: str = "") -> str:
    """Print a boolean node; ``context`` names the enclosing connective."""
    if isinstance(node, Compare):
        return f"{format_arith(node.left)} {node.op} {format_arith(node.right)}"
    if isinstance(node, Cross):
        right = node.right.name if isinstance(node.right, Col) else _num(node.right.value)
        return f"cross_{node.direction}({node.left.name}, {right})"
    if isinstance(node, Not):
        text = f"NOT {format_expr(node.operand, 'NOT')}"
        return f"({text})" if context == "NOT" else text
    if isinstance(node, And):
        text = " AND ".join(format_expr(i, "AND") for i in node.items)
        return f"({text})" if context in ("AND", "NOT") else text
    if isinstance(node, Or):
        text = " OR ".join(format_expr(i, "OR") for i in node.items)
        return f"({text})" if context in ("AND", "OR", "NOT") else text
    raise TypeError(f"not a boolean node: {node!r}")


def format_rule(rule: Rule) -> str:
    return (f"WHEN {format_expr(rule.condition)} "
            f"EMIT signal={rule.signal} position={_num(rule.position)};")


def format_ruleset(ruleset: RuleSet) -> str:
    return "".join(format_rule(r) + "\n" for r in ruleset.rules)
