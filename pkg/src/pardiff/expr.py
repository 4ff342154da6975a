"""Coefficient expressions over grid coordinates.

A small arithmetic language used wherever an operator or boundary condition
needs a variable coefficient.  Expressions are parsed once into an immutable
AST and can be evaluated at a single point or over numpy coordinate arrays.

Grammar (precedence lowest to highest):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := NUMBER | 'x'K | NAME '(' expr ')' | '(' expr ')'

Variables are ``x1``, ``x2``, ... (1-based).  Functions: exp, ln, sin, cos,
sqrt, abs.  Whitespace is insignificant.  There is no implicit
multiplication: ``2x1`` is a syntax error.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "CoeffExpr",
    "Num",
    "Var",
    "Neg",
    "Call",
    "BinOp",
    "ExprError",
    "ExprSyntaxError",
    "ExprEvalError",
    "parse",
    "evaluate",
    "evaluate_arrays",
    "to_string",
]

FUNCTIONS = ("exp", "ln", "sin", "cos", "sqrt", "abs")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class ExprEvalError(ExprError):
    """Evaluation hit a domain error or produced a non-finite value."""

    def __init__(self, message: str, point: Sequence[float] | None = None):
        self.point = tuple(float(v) for v in point) if point is not None else None
        if self.point is not None:
            message = f"{message} at point {self.point}"
        super().__init__(message)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based coordinate index


@dataclass(frozen=True)
class Neg:
    operand: "CoeffExpr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "CoeffExpr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "CoeffExpr"
    right: "CoeffExpr"


CoeffExpr = Union[Num, Var, Neg, Call, BinOp]

_NUMBER_RE = re.compile(r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_VAR_RE = re.compile(r"x(\d+)\Z")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens: list[tuple[str, str, int]] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            m = _NUMBER_RE.match(text, i)
            assert m is not None
            tokens.append(("number", m.group(), i))
            i = m.end()
            continue
        if c.isalpha() or c == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str) -> None:
        raise ExprSyntaxError(message, self.peek()[2])

    def parse(self) -> CoeffExpr:
        e = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {value!r}", offset)
        return e

    def expr(self) -> CoeffExpr:
        left = self.term()
        while self.peek()[0] in "+-":
            op = self.advance()[0]
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> CoeffExpr:
        left = self.unary()
        while self.peek()[0] in "*/":
            op = self.advance()[0]
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> CoeffExpr:
        if self.peek()[0] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> CoeffExpr:
        base = self.atom()
        if self.peek()[0] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> CoeffExpr:
        kind, value, offset = self.advance()
        if kind == "number":
            return Num(float(value))
        if kind == "(":
            e = self.expr()
            if self.peek()[0] != ")":
                self.fail("expected ')'")
            self.advance()
            return e
        if kind == "ident":
            m = _VAR_RE.match(value)
            if m is not None:
                index = int(m.group(1))
                if index < 1:
                    raise ExprSyntaxError(f"invalid variable index in {value!r}", offset)
                return Var(index)
            if value in FUNCTIONS:
                if self.peek()[0] != "(":
                    self.fail(f"expected '(' after {value!r}")
                self.advance()
                arg = self.expr()
                if self.peek()[0] != ")":
                    self.fail("expected ')'")
                self.advance()
                return Call(value, arg)
            raise ExprSyntaxError(f"unknown identifier {value!r}", offset)
        raise ExprSyntaxError(f"unexpected {value!r}" if value else "unexpected end of input", offset)


def parse(text: str) -> CoeffExpr:
    """Parse expression text into an AST.  Raises ExprSyntaxError with a byte offset."""
    return _Parser(text).parse()


_SCALAR_FUNCS = {
    "exp": math.exp,
    "ln": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": math.sqrt,
    "abs": abs,
}


def _check_finite(value: float, what: str, point: tuple[float, ...]) -> float:
    if not math.isfinite(value):
        raise ExprEvalError(f"non-finite result from {what}", point)
    return value


def _eval_scalar(e: CoeffExpr, point: tuple[float, ...]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.index > len(point):
            raise ExprEvalError(
                f"expression uses x{e.index} but the point has dimension {len(point)}", point
            )
        return point[e.index - 1]
    if isinstance(e, Neg):
        return -_eval_scalar(e.operand, point)
    if isinstance(e, Call):
        arg = _eval_scalar(e.arg, point)
        try:
            value = _SCALAR_FUNCS[e.func](arg)
        except (ValueError, OverflowError) as exc:
            raise ExprEvalError(f"{e.func}({arg!r}) failed: {exc}", point) from None
        return _check_finite(value, f"{e.func}(...)", point)
    left = _eval_scalar(e.left, point)
    right = _eval_scalar(e.right, point)
    if e.op == "+":
        return _check_finite(left + right, "addition", point)
    if e.op == "-":
        return _check_finite(left - right, "subtraction", point)
    if e.op == "*":
        return _check_finite(left * right, "multiplication", point)
    if e.op == "/":
        if right == 0.0:
            raise ExprEvalError("division by zero", point)
        return _check_finite(left / right, "division", point)
    # '^' with real-only semantics: a negative base needs an integer exponent.
    if left < 0.0 and right != math.floor(right):
        raise ExprEvalError(
            f"negative base {left!r} with non-integer exponent {right!r}", point
        )
    try:
        value = math.pow(left, right)
    except (ValueError, OverflowError) as exc:
        raise ExprEvalError(f"{left!r}^{right!r} failed: {exc}", point) from None
    return _check_finite(value, "power", point)


def evaluate(e: CoeffExpr, point: Sequence[float]) -> float:
    """Evaluate at a single point.  Raises ExprEvalError on any non-finite result."""
    return _eval_scalar(e, tuple(float(v) for v in point))


def _eval_array(e: CoeffExpr, coords: list[np.ndarray]):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.index > len(coords):
            raise ExprEvalError(
                f"expression uses x{e.index} but the grid has dimension {len(coords)}"
            )
        return coords[e.index - 1]
    if isinstance(e, Neg):
        return -_eval_array(e.operand, coords)
    if isinstance(e, Call):
        arg = _eval_array(e.arg, coords)
        if e.func == "ln":
            return np.log(arg)
        return getattr(np, e.func)(arg)
    left = _eval_array(e.left, coords)
    right = _eval_array(e.right, coords)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if e.op == "/":
        return np.divide(left, right)
    return np.power(left, right)


def evaluate_arrays(e: CoeffExpr, coords: Sequence[np.ndarray]) -> np.ndarray:
    """Vectorized evaluation over per-axis coordinate arrays of a common shape.

    Domain errors surface as non-finite entries rather than exceptions;
    callers that need per-node diagnostics should locate the offending entry
    and re-evaluate it with :func:`evaluate`.
    """
    arrays = [np.asarray(c, dtype=float) for c in coords]
    if not arrays:
        raise ValueError("evaluate_arrays needs at least one coordinate array")
    shape = arrays[0].shape
    with np.errstate(all="ignore"):
        out = _eval_array(e, arrays)
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3


def _prec(e: CoeffExpr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _NEG_PREC
    return 5


def to_string(e: CoeffExpr) -> str:
    """Canonical printer; ``parse(to_string(t)) == t`` for any parsed tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Neg):
        inner = to_string(e.operand)
        if _prec(e.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    p = _PREC[e.op]
    left = to_string(e.left)
    right = to_string(e.right)
    if e.op == "^":
        # Right-associative: parenthesize a compound base, and any exponent
        # below unary precedence (the grammar slot for exponents).
        if _prec(e.left) <= p:
            left = f"({left})"
        if _prec(e.right) < _NEG_PREC:
            right = f"({right})"
    else:
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
    return f"{left} {e.op} {right}" if e.op in "+-" else f"{left}{e.op}{right}"
