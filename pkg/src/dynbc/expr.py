"""Arithmetic expressions for coefficient functions.

A tiny language over the fixed variables ``t, x, y, u, p1, p2`` (``p1``,
``p2`` are the gradient components fed to interior coefficients) with the
functions ``sin, cos, exp, tanh, sqrt``, the constant ``pi`` and the binary
operators ``+ - * / ^``.  Exponents must be constants.

>>> e = parse("1 + u^2")
>>> float(evaluate(e, {"u": 2.0}))
5.0
>>> to_string(differentiate(e, "u"))
'2*u'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "VARIABLES",
    "FUNCTIONS",
    "Const",
    "Var",
    "Neg",
    "Call",
    "BinOp",
    "ExprError",
    "ExprSyntaxError",
    "ExprEvalError",
    "parse",
    "to_string",
    "evaluate",
    "differentiate",
    "substitute",
    "variables",
    "is_constant",
]

VARIABLES = ("t", "x", "y", "u", "p1", "p2")
FUNCTIONS = ("sin", "cos", "exp", "tanh", "sqrt")
NAMED_CONSTANTS = {"pi": math.pi}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    """Parse failure; ``offset`` is the byte offset of the offending token."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} (at byte {offset})")


class ExprEvalError(ExprError):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Neg, Call, BinOp]


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)


@dataclass
class _Tok:
    kind: str  # num, name, op, end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    n = len(text)
    byte_of = _byte_offsets(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", byte_of(pos), text)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), byte_of(m.start(kind))))
        pos = m.end()
    toks.append(_Tok("end", "", byte_of(n)))
    return toks


def _byte_offsets(text: str):
    if text.isascii():
        return lambda i: i
    return lambda i: len(text[:i].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        return ExprSyntaxError(message, tok.offset, self.text)

    def take(self) -> _Tok:
        tok = self.tok
        self.i += 1
        return tok

    def expect(self, op: str) -> _Tok:
        if self.tok.kind != "op" or self.tok.text != op:
            found = self.tok.text or "end of input"
            raise self.error(f"expected '{op}', found {found!r}")
        return self.take()

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise self.error("empty expression")
        node = self.sum()
        if self.tok.kind != "end":
            raise self.error(f"unexpected token {self.tok.text!r}")
        return node

    def sum(self) -> Expr:
        node = self.product()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.take().text
            node = BinOp(op, node, self.product())
        return node

    def product(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.take()
            if self.tok.kind == "num" and not self._followed_by_pow():
                return Const(-float(self.take().text))
            return Neg(self.unary())
        return self.power()

    def _followed_by_pow(self) -> bool:
        nxt = self.toks[self.i + 1]
        return nxt.kind == "op" and nxt.text == "^"

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            start = self.tok
            try:
                expo = _fold(self.unary())
            except ExprEvalError as exc:
                raise self.error(f"exponent is not a finite constant: {exc}", start) from None
            if not isinstance(expo, Const):
                raise self.error("exponent must be a constant", start)
            return BinOp("^", base, expo)
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.take()
            return Const(float(tok.text))
        if tok.kind == "name":
            self.take()
            name = tok.text
            if name in FUNCTIONS:
                if not (self.tok.kind == "op" and self.tok.text == "("):
                    raise self.error(f"function '{name}' must be called with one argument")
                self.take()
                if self.tok.kind == "op" and self.tok.text == ")":
                    raise self.error(f"function '{name}' takes exactly one argument, got none")
                arg = self.sum()
                if self.tok.kind == "op" and self.tok.text == ",":
                    raise self.error(f"function '{name}' takes exactly one argument")
                self.expect(")")
                return Call(name, arg)
            if name in VARIABLES:
                return Var(name)
            if name in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[name])
            raise self.error(f"unknown identifier '{name}'", tok)
        if tok.kind == "op" and tok.text == "(":
            self.take()
            node = self.sum()
            self.expect(")")
            return node
        if tok.kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {tok.text!r}")


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises
    ------
    ExprSyntaxError
        On malformed input, unknown identifiers or wrong function arity.
        The exception's ``offset`` attribute is a byte offset into the
        UTF-8 encoding of ``text``.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text).parse()


def _fold(node: Expr) -> Expr:
    """Fold subtrees made only of constants (used for exponents)."""
    if is_constant(node):
        with np.errstate(all="ignore"):
            val = float(_eval(node, {}))
        if not math.isfinite(val):
            raise ExprEvalError("constant expression is not finite")
        return Const(val)
    return node


def is_constant(node: Expr) -> bool:
    return not variables(node)


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}
_ATOM = 5


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _ATOM


def _is_neg_zero(v: float) -> bool:
    return v == 0.0 and math.copysign(1.0, v) < 0


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_string(node: Expr) -> str:
    """Render ``node`` with the minimal parentheses needed to parse back."""
    if isinstance(node, Const):
        v = float(node.value)
        if v < 0 or _is_neg_zero(v):
            return f"(-{_fmt_number(-v)})"
        return _fmt_number(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.arg)
        if _prec(node.arg) < _PREC["neg"] or (isinstance(node.arg, Const) and node.arg.value >= 0):
            # a bare "-3" would fold into a negative literal
            inner = f"({inner})"
        return "-" + inner
    p = _PREC[node.op]
    left = to_string(node.left)
    right = to_string(node.right)
    if node.op == "^":
        if _prec(node.left) < _ATOM:
            left = f"({left})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left}{node.op}{right}" if node.op in "*/^" else f"{left} {node.op} {right}"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

_UFUNC = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh, "sqrt": np.sqrt}


def evaluate(node: Expr, ctx: Mapping[str, object]):
    """Evaluate ``node`` with variable bindings from ``ctx``.

    Bindings may be scalars or numpy arrays (broadcast together).  Every
    intermediate result is checked for finiteness so that overflow, domain
    errors and division by zero raise instead of leaking NaN/inf.

    Raises
    ------
    ExprEvalError
        On an unbound variable or a non-finite intermediate.
    """
    with np.errstate(all="ignore"):
        return _eval(node, ctx, check=True)


def _eval(node: Expr, ctx, check: bool = False):
    if isinstance(node, Const):
        return np.float64(node.value)
    if isinstance(node, Var):
        try:
            val = ctx[node.name]
        except KeyError:
            raise ExprEvalError(f"variable '{node.name}' is not bound") from None
        val = np.asarray(val, dtype=float)
        if check and not np.all(np.isfinite(val)):
            raise ExprEvalError(f"variable '{node.name}' has a non-finite value")
        return val
    if isinstance(node, Neg):
        return -_eval(node.arg, ctx, check)
    if isinstance(node, Call):
        arg = _eval(node.arg, ctx, check)
        out = _UFUNC[node.name](arg)
        if check and not np.all(np.isfinite(out)):
            raise ExprEvalError(f"{node.name}() produced a non-finite value (domain or overflow)")
        return out
    a = _eval(node.left, ctx, check)
    b = _eval(node.right, ctx, check)
    if node.op == "+":
        out = a + b
    elif node.op == "-":
        out = a - b
    elif node.op == "*":
        out = a * b
    elif node.op == "/":
        if check and np.any(b == 0):
            raise ExprEvalError("division by zero")
        out = a / b
    else:
        out = np.power(a, b)
    if check and not np.all(np.isfinite(out)):
        raise ExprEvalError(f"operator '{node.op}' produced a non-finite value")
    return out


# ---------------------------------------------------------------------------
# Symbolic differentiation
# ---------------------------------------------------------------------------

ZERO = Const(0.0)
ONE = Const(1.0)


def _c(node: Expr, v: float) -> bool:
    return isinstance(node, Const) and node.value == v


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _c(a, 0):
        return b
    if _c(b, 0):
        return a
    return BinOp("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _c(b, 0):
        return a
    if _c(a, 0):
        return _neg(b)
    return BinOp("-", a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _c(a, 0) or _c(b, 0):
        return ZERO
    if _c(a, 1):
        return b
    if _c(b, 1):
        return a
    if _c(a, -1):
        return _neg(b)
    if _c(b, -1):
        return _neg(a)
    return BinOp("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return Const(a.value / b.value)
    if _c(a, 0):
        return ZERO
    if _c(b, 1):
        return a
    return BinOp("/", a, b)


def _pow(a: Expr, c: float) -> Expr:
    if c == 0:
        return ONE
    if c == 1:
        return a
    if isinstance(a, Const):
        try:
            val = a.value**c
        except ZeroDivisionError:
            val = None
        if isinstance(val, float) and math.isfinite(val):
            return Const(val)
    return BinOp("^", a, Const(c))


def differentiate(node: Expr, var: str) -> Expr:
    """Symbolic partial derivative of ``node`` with respect to ``var``.

    Only literal constant arithmetic is folded; no further simplification.
    """
    if var not in VARIABLES:
        raise ExprError(f"cannot differentiate with respect to '{var}'")
    return _d(node, var)


def _d(node: Expr, var: str) -> Expr:
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return _neg(_d(node.arg, var))
    if isinstance(node, Call):
        da = _d(node.arg, var)
        if _c(da, 0):
            return ZERO
        a = node.arg
        if node.name == "sin":
            outer = Call("cos", a)
        elif node.name == "cos":
            outer = _neg(Call("sin", a))
        elif node.name == "exp":
            outer = node
        elif node.name == "tanh":
            outer = _sub(ONE, _pow(node, 2.0))
        elif node.name == "sqrt":
            return _div(da, _mul(Const(2.0), node))
        else:  # pragma: no cover - parser rejects other names
            raise ExprError(f"unknown function {node.name}")
        return _mul(outer, da)
    a, b = node.left, node.right
    if node.op == "+":
        return _add(_d(a, var), _d(b, var))
    if node.op == "-":
        return _sub(_d(a, var), _d(b, var))
    if node.op == "*":
        return _add(_mul(_d(a, var), b), _mul(a, _d(b, var)))
    if node.op == "/":
        da, db = _d(a, var), _d(b, var)
        if _c(db, 0):
            return _div(da, b)
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, 2.0))
    # constant exponent by construction
    c = b.value
    return _mul(_mul(Const(c), _pow(a, c - 1.0)), _d(a, var))


# ---------------------------------------------------------------------------
# Tree utilities
# ---------------------------------------------------------------------------


def variables(node: Expr) -> frozenset[str]:
    """Set of variable names referenced by ``node``."""
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Const):
        return frozenset()
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    return variables(node.left) | variables(node.right)


def substitute(node: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Const):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, mapping))
    if isinstance(node, Call):
        return Call(node.name, substitute(node.arg, mapping))
    return BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping))


def as_expr(value) -> Expr:
    """Coerce a number, string or tree into an expression tree."""
    if isinstance(value, (Const, Var, Neg, Call, BinOp)):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool):
        v = float(value)
        if not math.isfinite(v):
            raise ExprError("constant coefficient must be finite")
        return Const(v)
    raise TypeError(f"cannot interpret {type(value).__name__} as an expression")
