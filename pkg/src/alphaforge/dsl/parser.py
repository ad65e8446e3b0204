"""Tokenizer and recursive-descent parser for ``.afs`` rule files.

Grammar::

    ruleset    := { rule }
    rule       := "WHEN" expr "EMIT" "signal" "=" int "position" "=" number ";"
    expr       := andexpr { "OR" andexpr }
    andexpr    := notexpr { "AND" notexpr }
    notexpr    := [ "NOT" ] primary
    primary    := comparison | crossfn | "(" expr ")"
    comparison := arith ( "<" | "<=" | ">" | ">=" | "==" | "!=" ) arith
    crossfn    := ( "cross_above" | "cross_below" ) "(" colref "," ( colref | number ) ")"
    arith      := term { ("+" | "-") term }
    term       := atom { ("*" | "/") atom }
    atom       := number | colref | "prev" "(" colref [ "," int ] ")" | "(" arith ")"

Numbers may carry a leading minus sign. Keywords are case-insensitive;
column names are lowercase. ``#`` starts a comment.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from ..errors import AlphaForgeError
from ..factors.naming import FactorNameError, parse_factor_name
from ..marketdata import PRICE_FIELDS
from .nodes import (
    COMPARATORS,
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
)

MAX_PREV = 10
KEYWORDS = {
    "when", "emit", "and", "or", "not", "signal", "position",
    "prev", "cross_above", "cross_below",
}
_COLUMN_RE = re.compile(r"^[a-z][a-z0-9_]*$")
_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|[<>=+\-*/(),;])
    """,
    re.VERBOSE,
)


class DslError(AlphaForgeError):
    pass


class DslSyntaxError(DslError):
    def __init__(self, message: str, line: int, col: int, expected=(), fatal: bool = False):
        self.line, self.col, self.expected = line, col, tuple(expected)
        self.fatal = fatal  # a semantic error that backtracking must not hide
        hint = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"line {line}, column {col}: {message}{hint}")


class UnknownColumn(DslError):
    def __init__(self, name: str, line: int, col: int, reason: str = ""):
        self.name, self.line, self.col = name, line, col
        super().__init__(f"line {line}, column {col}: unknown column {name!r}"
                         + (f": {reason}" if reason else ""))


class InconsistentSignalPosition(DslError):
    def __init__(self, rule_index: int, signal: int, position: float):
        self.rule_index = rule_index
        super().__init__(
            f"rule {rule_index}: signal={signal} is inconsistent with position={position}"
        )


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | kw | op | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if not m:
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", line, col,
                                 ["operator", "number", "name"])
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind == "ident":
            if value.lower() in KEYWORDS:
                tokens.append(Token("kw", value.lower(), line, col))
            elif _COLUMN_RE.match(value):
                tokens.append(Token("ident", value, line, col))
            else:
                raise DslSyntaxError(f"column names must be lowercase: {value!r}", line, col,
                                     ["lowercase column name"])
        elif kind in ("num", "op"):
            tokens.append(Token(kind, value, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _describe(tok: Token) -> str:
    return "end of input" if tok.kind == "eof" else repr(tok.text)


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def fail(self, expected, tok: Token | None = None) -> DslSyntaxError:
        tok = tok or self.tok
        return DslSyntaxError(f"unexpected {_describe(tok)}", tok.line, tok.col, expected)

    def expect(self, kind: str, text: str | None = None) -> Token:
        if not self.at(kind, text):
            label = kind if text is None else repr(text.upper() if kind == "kw" else text)
            raise self.fail([label])
        tok = self.tok
        self.pos += 1
        return tok

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            tok = self.tok
            self.pos += 1
            return tok
        return None

    # -- grammar
    def ruleset(self) -> tuple[Rule, ...]:
        rules = []
        while not self.at("eof"):
            rules.append(self.rule(len(rules)))
        return tuple(rules)

    def rule(self, index: int) -> Rule:
        self.expect("kw", "when")
        cond = self.expr()
        self.expect("kw", "emit")
        self.expect("kw", "signal")
        self.expect("op", "=")
        sig_tok = self.tok
        signal = self.number(integer=True)
        self.expect("kw", "position")
        self.expect("op", "=")
        pos_tok = self.tok
        position = self.number()
        self.expect("op", ";")
        if signal not in (-1, 0, 1):
            raise DslSyntaxError(f"signal {signal} out of range", sig_tok.line, sig_tok.col,
                                 ["-1", "0", "1"])
        if not 0.0 <= position <= 1.0:
            raise DslSyntaxError(f"position {position} out of range", pos_tok.line,
                                 pos_tok.col, ["a number in [0, 1]"])
        if (signal == 1 and position <= 0.0) or (signal == -1 and position != 0.0):
            raise InconsistentSignalPosition(index, signal, position)
        return Rule(cond, int(signal), float(position))

    def expr(self):
        items = [self.andexpr()]
        while self.accept("kw", "or"):
            items.append(self.andexpr())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def andexpr(self):
        items = [self.notexpr()]
        while self.accept("kw", "and"):
            items.append(self.notexpr())
        return items[0] if len(items) == 1 else And(tuple(items))

    def notexpr(self):
        if self.accept("kw", "not"):
            return Not(self.primary())
        return self.primary()

    def primary(self):
        if self.at("kw", "cross_above") or self.at("kw", "cross_below"):
            return self.crossfn()
        if self.at("op", "("):
            # "(" opens either a grouped comparison operand or a boolean group
            start = self.pos
            try:
                return self.comparison()
            except DslSyntaxError as exc:
                if exc.fatal:
                    raise
                first = exc
            self.pos = start + 1
            try:
                inner = self.expr()
                self.expect("op", ")")
            except DslSyntaxError as exc:
                if exc.fatal or (exc.line, exc.col) >= (first.line, first.col):
                    raise
                raise first from None
            return inner
        return self.comparison()

    def comparison(self):
        left = self.arith()
        if not (self.tok.kind == "op" and self.tok.text in COMPARATORS):
            raise self.fail(list(COMPARATORS))
        op = self.tok.text
        self.pos += 1
        return Compare(op, left, self.arith())

    def crossfn(self):
        direction = self.tok.text.split("_")[1]
        self.pos += 1
        self.expect("op", "(")
        left = self.colref()
        self.expect("op", ",")
        if self.at("ident"):
            right = self.colref()
        elif self.at("num") or self.at("op", "-"):
            right = Num(self.number())
        else:
            raise self.fail(["column", "number"])
        self.expect("op", ")")
        return Cross(direction, left, right)

    def arith(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.pos += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.atom()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.pos += 1
            divisor_tok = self.tok
            right = self.atom()
            if op == "/" and isinstance(right, Num) and right.value == 0:
                raise DslSyntaxError("division by literal zero", divisor_tok.line,
                                     divisor_tok.col, ["non-zero divisor"], fatal=True)
            node = BinOp(op, node, right)
        return node

    def atom(self):
        if self.at("num") or self.at("op", "-"):
            return Num(self.number())
        if self.at("ident"):
            return self.colref()
        if self.accept("kw", "prev"):
            self.expect("op", "(")
            col = self.colref()
            k = 1
            if self.accept("op", ","):
                k_tok = self.tok
                k = self.number(integer=True)
                if not 1 <= k <= MAX_PREV:
                    raise DslSyntaxError(f"prev offset {k} out of range", k_tok.line,
                                         k_tok.col, [f"integer 1..{MAX_PREV}"], fatal=True)
            self.expect("op", ")")
            return Prev(col.name, k)
        if self.accept("op", "("):
            inner = self.arith()
            self.expect("op", ")")
            return inner
        raise self.fail(["number", "column", "prev", "'('"])

    def colref(self) -> Col:
        tok = self.expect("ident")
        if tok.text not in PRICE_FIELDS:
            try:
                parse_factor_name(tok.text)
            except FactorNameError as exc:
                raise UnknownColumn(tok.text, tok.line, tok.col, str(exc)) from None
        return Col(tok.text)

    def number(self, integer: bool = False):
        neg = self.accept("op", "-") is not None
        tok = self.tok
        if tok.kind != "num":
            raise self.fail(["integer" if integer else "number"])
        if integer and not tok.text.isdigit():
            raise self.fail(["integer"])
        value = int(tok.text) if integer else float(tok.text)
        if not math.isfinite(value):
            raise DslSyntaxError(f"number {tok.text} overflows", tok.line, tok.col,
                                 ["finite number"], fatal=True)
        self.pos += 1
        return -value if neg else value


def parse(text: str, name: str = "", description: str = "") -> RuleSet:
    """Parse rule source into a RuleSet.

    Raises DslSyntaxError (with line, column and expected tokens),
    UnknownColumn or InconsistentSignalPosition.
    """
    parser = _Parser(text)
    return RuleSet(parser.ruleset(), name=name, description=description)


def parse_file(path) -> RuleSet:
    import os

    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse(text, name=os.path.splitext(os.path.basename(os.fspath(path)))[0])
