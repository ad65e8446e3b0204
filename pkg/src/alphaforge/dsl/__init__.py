"""Rule language for deterministic strategies (``.afs`` files)."""

from .evaluate import (
    EvaluationError,
    IndexOutOfRange,
    MissingColumn,
    evaluate,
    required_factors,
    required_history,
    truth,
)
from .nodes import (
    And,
    BinOp,
    Col,
    Compare,
    Cross,
    Not,
    Num,
    Or,
    Prev,
    Rule,
    RuleSet,
    format_expr,
    format_rule,
    format_ruleset,
)
from .parser import (
    MAX_PREV,
    DslError,
    DslSyntaxError,
    InconsistentSignalPosition,
    UnknownColumn,
    parse,
    parse_file,
    tokenize,
)

__all__ = [
    "And", "BinOp", "Col", "Compare", "Cross", "Not", "Num", "Or", "Prev", "Rule",
    "RuleSet", "format_expr", "format_rule", "format_ruleset",
    "MAX_PREV", "DslError", "DslSyntaxError", "InconsistentSignalPosition",
    "UnknownColumn", "parse", "parse_file", "tokenize",
    "EvaluationError", "IndexOutOfRange", "MissingColumn", "evaluate",
    "required_factors", "required_history", "truth",
]
