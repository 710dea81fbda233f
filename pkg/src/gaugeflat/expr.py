"""Scalar expressions over chart coordinates: parser, printer, jet evaluation.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-'|'+') factor | atom ('^' ['-'] integer)?
    atom   := 'x'<digits> | literal | func '(' expr ')' | '(' expr ')'
    func   := exp | sin | cos

A literal is a decimal number with an optional ``i`` suffix (``2``,
``0.5i``, ``1e-3``).  Coordinates are 1-based in source text (``x1``) and
0-based in the tree.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .jets import Jet, compose, factorial_falling


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, source: str, position: int):
        super().__init__(f"{message} at position {position}: {source!r}")
        self.source = source
        self.position = position


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of an operation (division by zero)."""


# -- tree -----------------------------------------------------------------


class Expr:
    """Base class of expression nodes."""

    prec = 5

    def jet(self, x: np.ndarray, order: int) -> Jet:
        """Jet (1x1 matrices) at the points ``x`` of shape ``batch + (n,)``."""
        raise NotImplementedError

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Coord(Expr):
    index: int
    label: str | None = None

    def jet(self, x, order):
        n = x.shape[-1]
        val = x[..., self.index].astype(complex)[..., None, None]
        parts = [val]
        if order >= 1:
            first = np.zeros((n,) + val.shape, dtype=complex)
            first[self.index] = 1.0
            parts.append(first)
            parts.extend([None] * (order - 1))
        return Jet(parts, n)


@dataclass(frozen=True)
class Const(Expr):
    value: complex

    def jet(self, x, order):
        val = np.full(x.shape[:-1] + (1, 1), complex(self.value))
        return Jet.constant(val, x.shape[-1], order)


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr
    prec = 3

    def jet(self, x, order):
        return -self.arg.jet(x, order)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def prec(self):
        return 1 if self.op in "+-" else 2

    def jet(self, x, order):
        a = self.left.jet(x, order)
        b = self.right.jet(x, order)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a * _reciprocal(b)


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    prec = 4

    def jet(self, x, order):
        u = self.base.jet(x, order)
        p = self.exponent
        u0 = u.value
        if p < 0 and np.any(u0 == 0):
            raise DomainError(f"negative power of zero in {to_source(self)}")
        derivs = []
        for j in range(order + 1):
            c = factorial_falling(p, j)
            derivs.append(np.zeros_like(u0) if c == 0 else c * u0 ** (p - j))
        return compose(u, derivs)


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def jet(self, x, order):
        u = self.arg.jet(x, order)
        u0 = u.value
        if self.name == "exp":
            e = np.exp(u0)
            derivs = [e] * (order + 1)
        else:
            s, c = np.sin(u0), np.cos(u0)
            cycle = [s, c, -s, -c] if self.name == "sin" else [c, -s, -c, s]
            derivs = [cycle[j % 4] for j in range(order + 1)]
        return compose(u, derivs)


def _reciprocal(b: Jet) -> Jet:
    b0 = b.value
    if np.any(b0 == 0):
        raise DomainError("division by zero")
    derivs = [(-1) ** j * math.factorial(j) / b0 ** (j + 1) for j in range(b.order + 1)]
    return compose(b, derivs)


FUNCTIONS = ("exp", "sin", "cos")

# -- printer --------------------------------------------------------------


def _fmt_real(v: float) -> str:
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def _fmt_const(c: complex) -> str:
    c = complex(c)
    if c.imag == 0:
        return _fmt_real(c.real)
    if c.real == 0:
        return _fmt_real(c.imag) + "i"
    sign = "+" if c.imag >= 0 else "-"
    return f"({_fmt_real(c.real)}{sign}{_fmt_real(abs(c.imag))}i)"


def to_source(e: Expr) -> str:
    """Print ``e`` with the minimal parentheses the grammar needs."""
    if isinstance(e, Coord):
        return e.label if e.label else f"x{e.index + 1}"
    if isinstance(e, Const):
        s = _fmt_const(e.value)
        return f"({s})" if s.startswith("-") else s
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        return "-" + (f"({inner})" if e.arg.prec < 3 else inner)
    if isinstance(e, Func):
        return f"{e.name}({to_source(e.arg)})"
    if isinstance(e, Pow):
        inner = to_source(e.base)
        if e.base.prec < 5:
            inner = f"({inner})"
        return f"{inner}^{e.exponent}"
    if isinstance(e, BinOp):
        left = to_source(e.left)
        if e.left.prec < e.prec:
            left = f"({left})"
        right = to_source(e.right)
        if e.right.prec <= e.prec:
            right = f"({right})"
        sep = f" {e.op} " if e.op in "+-" else e.op
        return f"{left}{sep}{right}"
    raise TypeError(f"not an expression: {e!r}")


# -- parser ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(source: str):
    pos = 0
    out = []
    while pos < len(source):
        while pos < len(source) and source[pos].isspace():
            pos += 1
        if pos == len(source):
            break
        m = _TOKEN.match(source, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {source[pos]!r}", source, pos)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(source)))
    return out


class _Parser:
    def __init__(self, source: str, dim: int, parameter: str | None):
        self.source = source
        self.dim = dim
        self.parameter = parameter
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, self.source, tok[2])

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            self.fail(f"expected {value!r}, got {tok[1] or 'end of input'!r}", tok)

    def parse(self) -> Expr:
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.factor())
        return e

    def factor(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            inner = self.factor()
            return Neg(inner) if tok[1] == "-" else inner
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            tok = self.take()
            if tok[0] != "num" or not tok[1].isdigit():
                self.fail("exponent must be an integer", tok)
            return Pow(base, sign * int(tok[1]))
        return base

    def atom(self):
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            if text.endswith("i"):
                return Const(complex(0.0, float(text[:-1])))
            return Const(complex(float(text), 0.0))
        if kind == "name":
            if self.parameter is not None and text == self.parameter:
                return Coord(0, self.parameter)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(text, arg)
            m = re.fullmatch(r"x(\d+)", text)
            if m and self.parameter is None:
                k = int(m.group(1))
                if not 1 <= k <= self.dim:
                    raise ParseError(f"unknown coordinate {text} (dimension {self.dim})", self.source, pos)
                return Coord(k - 1)
            raise ParseError(f"unknown name {text!r}", self.source, pos)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.fail(f"unexpected token {text or 'end of input'!r}", tok)


def parse_expr(source: str, domain=None, *, dim: int | None = None, parameter: str | None = None) -> Expr:
    """Parse ``source`` into an :class:`Expr`.

    ``domain`` (a ChartDomain) or ``dim`` bounds the coordinate indices.  With
    ``parameter='t'`` the only admissible variable is ``t`` (used for paths).
    """
    if domain is not None:
        dim = domain.dim
    if parameter is not None:
        dim = 1
    if dim is None:
        raise TypeError("parse_expr needs a domain or dim")
    return _Parser(source, dim, parameter).parse()
