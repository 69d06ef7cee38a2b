"""A small arithmetic language for target functions on the command line.

Grammar (lowest to highest precedence)::

    list   := expr ("," expr)*
    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?            # right associative
    atom   := NUMBER | VAR | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Variables are ``x1 .. xd``. Evaluation is vectorized: an input of shape
``(n, d)`` gives an output of shape ``(n, d_out)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NarrowNetError


class ExprSyntaxError(NarrowNetError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprEvalError(NarrowNetError, ArithmeticError):
    def __init__(self, message, node):
        super().__init__(f"{message} in '{node.to_source()}' (offset {node.offset})")
        self.node = node
        self.offset = node.offset


FUNCTIONS = {
    "sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "abs": 1,
    "min": 2, "max": 2,
}

MAX_INT_POWER = 16

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        if source[pos:].strip() == "":
            break
        m = _TOKEN.match(source, pos)
        if not m or m.end() == pos:
            bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append(Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(Token("end", "", len(source)))
    return tokens


# -- syntax tree ---------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    offset: int


@dataclass(frozen=True)
class Num(Node):
    value: float

    def to_source(self):
        return repr(self.value)

    def evaluate(self, x):
        return np.full(x.shape[0], self.value)


@dataclass(frozen=True)
class Var(Node):
    index: int

    def to_source(self):
        return f"x{self.index + 1}"

    def evaluate(self, x):
        return x[:, self.index]


@dataclass(frozen=True)
class Neg(Node):
    operand: Node

    def to_source(self):
        return f"(-{self.operand.to_source()})"

    def evaluate(self, x):
        return -self.operand.evaluate(x)


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    def to_source(self):
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"

    def evaluate(self, x):
        a = self.left.evaluate(x)
        b = self.right.evaluate(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if np.any(b == 0):
                raise ExprEvalError("division by zero", self)
            return a / b
        return _power(self, a, b)


def _power(node, base, expo):
    e0 = expo[0] if expo.size else 0.0
    if expo.size and np.all(expo == e0) and float(e0).is_integer() and abs(e0) <= MAX_INT_POWER:
        n = int(e0)
        if n < 0 and np.any(base == 0):
            raise ExprEvalError("zero raised to a negative power", node)
        out = np.ones_like(base)
        for _ in range(abs(n)):
            out = out * base
        return 1.0 / out if n < 0 else out
    if np.any(base < 0):
        raise ExprEvalError("negative base with non-integer exponent", node)
    zero = base == 0
    if np.any(zero & (expo <= 0)):
        raise ExprEvalError("zero raised to a nonpositive power", node)
    with np.errstate(divide="ignore"):
        out = np.exp(expo * np.log(np.where(zero, 1.0, base)))
    return np.where(zero, 0.0, out)


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: tuple

    def to_source(self):
        return f"{self.name}({', '.join(a.to_source() for a in self.args)})"

    def evaluate(self, x):
        vals = [a.evaluate(x) for a in self.args]
        name = self.name
        if name == "log":
            if np.any(vals[0] <= 0):
                raise ExprEvalError("log of a nonpositive number", self)
            return np.log(vals[0])
        if name == "sqrt":
            if np.any(vals[0] < 0):
                raise ExprEvalError("sqrt of a negative number", self)
            return np.sqrt(vals[0])
        if name == "min":
            return np.minimum(vals[0], vals[1])
        if name == "max":
            return np.maximum(vals[0], vals[1])
        with np.errstate(over="ignore"):
            return getattr(np, name)(vals[0])


@dataclass(frozen=True)
class Expr:
    """A parsed target ``R^d_in -> R^d_out``; callable on points or batches."""

    source: str
    d_in: int
    components: tuple

    @property
    def d_out(self) -> int:
        return len(self.components)

    def to_source(self) -> str:
        return ", ".join(c.to_source() for c in self.components)

    def __call__(self, x):
        return eval_expr(self, x)


def eval_expr(e: Expr, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.ndim != 2 or pts.shape[1] != e.d_in:
        raise DimensionError(f"expected points of dimension {e.d_in}, got shape {x.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        cols = [np.broadcast_to(c.evaluate(pts), (pts.shape[0],)) for c in e.components]
    out = np.stack(cols, axis=1).astype(np.float64, copy=False)
    return out[0] if single else out


# -- parser ----------------------------------------------------------------------

class _Parser:
    def __init__(self, source, d_in):
        self.tokens = tokenize(source)
        self.pos = 0
        self.d_in = d_in

    @property
    def tok(self):
        return self.tokens[self.pos]

    def advance(self):
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect(self, text):
        if self.tok.text != text or self.tok.kind == "end":
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", self.tok.offset)
        return self.advance()

    def parse_list(self):
        items = [self.parse_expr()]
        while self.tok.text == ",":
            self.advance()
            items.append(self.parse_expr())
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return items

    def parse_expr(self):
        node = self.parse_term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            t = self.advance()
            node = BinOp(t.offset, t.text, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            t = self.advance()
            node = BinOp(t.offset, t.text, node, self.parse_unary())
        return node

    def parse_unary(self):
        if self.tok.kind == "op" and self.tok.text in ("-", "+"):
            t = self.advance()
            operand = self.parse_unary()
            return Neg(t.offset, operand) if t.text == "-" else operand
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            t = self.advance()
            return BinOp(t.offset, "^", base, self.parse_unary())
        return base

    def parse_atom(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(t.offset, float(t.text))
        if t.kind == "name":
            self.advance()
            m = re.fullmatch(r"x([1-9]\d*)", t.text)
            if m:
                k = int(m.group(1))
                if k > self.d_in:
                    raise ExprSyntaxError(f"variable {t.text} exceeds input dimension {self.d_in}", t.offset)
                return Var(t.offset, k - 1)
            if t.text not in FUNCTIONS:
                raise ExprSyntaxError(f"unknown identifier {t.text!r}", t.offset)
            self.expect("(")
            args = [self.parse_expr()]
            while self.tok.text == ",":
                self.advance()
                args.append(self.parse_expr())
            self.expect(")")
            if len(args) != FUNCTIONS[t.text]:
                raise ExprSyntaxError(
                    f"{t.text} takes {FUNCTIONS[t.text]} argument(s), got {len(args)}", t.offset
                )
            return Call(t.offset, t.text, tuple(args))
        if t.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect(")")
            return node
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(f"unexpected {found}", t.offset)


def parse(source: str, d_in: int) -> Expr:
    if d_in < 1:
        raise ValueError("input dimension must be at least 1")
    components = _Parser(source, d_in).parse_list()
    return Expr(source, d_in, tuple(components))
