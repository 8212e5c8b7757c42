"""Arithmetic expression ASTs: parse, evaluate, differentiate, compile.

Expressions define vector-field components and conserved quantities over
state variables ``x1..xn`` and named parameters.  Differentiation is
symbolic (derivative trees can be printed and sign-inspected); a separate
bytecode-compiling path exists purely for fast repeated evaluation inside
the integrator and samplers.

Grammar (whitespace insignificant)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? power
    power  := atom ('^' factor)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so
``-x1^2`` is ``-(x1^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

from .errors import ExprSyntaxError, NumericError, UnknownIdentifier

__all__ = [
    "Expr", "Num", "Var", "Param", "Neg", "Bin", "Call",
    "parse", "evaluate", "diff", "to_str", "compile_expr",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, matches the x<i> spelling


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Param, Neg, Bin, Call]

FUNCTIONS = {"exp": 1, "ln": 1, "sin": 1, "cos": 1, "sqrt": 1, "pow": 2}

_VAR_RE = re.compile(r"x([1-9]\d*)\Z")
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            stripped = src[pos:].lstrip()
            if not stripped:
                break
            raise ExprSyntaxError(f"unexpected character {stripped[0]!r}",
                                  len(src) - len(stripped))
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, dim: int, params: frozenset[str]):
        self.src = src
        self.dim = dim
        self.params = params
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.take()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"expected {op!r}, found {text or 'end of input'!r}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"trailing input {text!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                e = Bin(text, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                e = Bin(text, e, self.factor())
            else:
                return e

    def factor(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.power())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return Bin("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            nk, nt, _ = self.peek()
            if nk == "op" and nt == "(":
                if text not in FUNCTIONS:
                    raise UnknownIdentifier(f"unknown function {text!r} at offset {off}")
                self.take()
                args = [self.expr()]
                while True:
                    k2, t2, o2 = self.take()
                    if k2 == "op" and t2 == ",":
                        args.append(self.expr())
                    elif k2 == "op" and t2 == ")":
                        break
                    else:
                        raise ExprSyntaxError("expected ',' or ')'", o2)
                if len(args) != FUNCTIONS[text]:
                    raise ExprSyntaxError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", off)
                return Call(text, tuple(args))
            vm = _VAR_RE.match(text)
            if vm:
                idx = int(vm.group(1))
                if idx > self.dim:
                    raise UnknownIdentifier(
                        f"variable {text!r} exceeds dimension {self.dim} (offset {off})")
                return Var(idx)
            if text in self.params:
                return Param(text)
            raise UnknownIdentifier(f"undeclared identifier {text!r} at offset {off}")
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", off)


def parse(src: str, dim: int, params: Iterable[str] = ()) -> Expr:
    """Parse ``src`` against a state dimension and declared parameter names."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(src, dim, frozenset(params)).parse()


def _pow(a: float, b: float) -> float:
    # math.pow rejects negative bases with fractional exponents instead of
    # silently returning complex values the way float.__pow__ does.
    return math.pow(a, b)


_FN_EVAL: dict[str, Callable[..., float]] = {
    "exp": math.exp, "ln": math.log, "sin": math.sin, "cos": math.cos,
    "sqrt": math.sqrt, "pow": _pow,
}


def _ev(e: Expr, x, params: Mapping[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return float(x[e.index - 1])
    if isinstance(e, Param):
        try:
            return float(params[e.name])
        except KeyError:
            raise UnknownIdentifier(f"parameter {e.name!r} has no value") from None
    if isinstance(e, Neg):
        return -_ev(e.arg, x, params)
    if isinstance(e, Bin):
        a = _ev(e.left, x, params)
        b = _ev(e.right, x, params)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
        return _pow(a, b)
    return _FN_EVAL[e.fn](*(_ev(a, x, params) for a in e.args))


def evaluate(e: Expr, x, params: Mapping[str, float] | None = None) -> float:
    """Evaluate at state ``x`` (sequence, 0-based) with parameter values."""
    try:
        val = _ev(e, x, params or {})
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        raise NumericError(f"evaluation failed: {exc}") from exc
    if not math.isfinite(val):
        raise NumericError(f"non-finite result {val!r}")
    return val


def _is_num(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Num) and (value is None or e.value == value)


def _fold(e: Expr) -> Expr:
    """Evaluate e if every leaf is a literal; otherwise return it unchanged."""
    try:
        return Num(evaluate(e, (), {}))
    except (NumericError, UnknownIdentifier, IndexError, TypeError):
        return e


def _add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return _fold(Bin("+", a, b))


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return _fold(Bin("-", a, b))


def _neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return _fold(Bin("*", a, b))


def _div(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return _fold(Bin("/", a, b))


def _powe(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return Num(1.0)
    return _fold(Bin("^", a, b))


def diff(e: Expr, i: int) -> Expr:
    """Symbolic partial derivative with respect to ``x<i>`` (1-based).

    Literal-only subtrees fold to constants and additive/multiplicative
    identities are elided, so simple polynomial derivatives come back as
    the plain constants one expects; no deeper rewriting is attempted.
    """
    if isinstance(e, Num) or isinstance(e, Param):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0 if e.index == i else 0.0)
    if isinstance(e, Neg):
        return _neg(diff(e.arg, i))
    if isinstance(e, Bin):
        a, b = e.left, e.right
        da, db = diff(a, i), diff(b, i)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if e.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), _powe(b, Num(2.0)))
        return _diff_pow(a, b, da, db)
    fn, args = e.fn, e.args
    if fn == "pow":
        a, b = args
        return _diff_pow(a, b, diff(a, i), diff(b, i))
    a = args[0]
    da = diff(a, i)
    if fn == "exp":
        return _mul(Call("exp", (a,)), da)
    if fn == "ln":
        return _div(da, a)
    if fn == "sin":
        return _mul(Call("cos", (a,)), da)
    if fn == "cos":
        return _neg(_mul(Call("sin", (a,)), da))
    # sqrt
    return _div(da, _mul(Num(2.0), Call("sqrt", (a,))))


def _diff_pow(a: Expr, b: Expr, da: Expr, db: Expr) -> Expr:
    if isinstance(b, Num):
        c = b.value
        if c == 0.0:
            return Num(0.0)
        return _mul(_mul(Num(c), _powe(a, Num(c - 1.0))), da)
    # General a^b = exp(b ln a); derivative a^b (db ln a + b da / a).
    inner = _add(_mul(db, Call("ln", (a,))), _div(_mul(b, da), a))
    return _mul(_powe(a, b), inner)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 2, "^": 3, "atom": 5}


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC["neg"]
    return _PREC["atom"]


def to_str(e: Expr) -> str:
    """Canonical serialization; reparsing yields an equivalent function."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Neg):
        inner = to_str(e.arg)
        if _prec(e.arg) <= _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Bin):
        lp, rp = _prec(e.left), _prec(e.right)
        ls, rs = to_str(e.left), to_str(e.right)
        mine = _PREC[e.op]
        if e.op == "^":
            # right-associative; unary minus binds looser than ^
            if lp <= mine:
                ls = f"({ls})"
            if rp < mine:
                rs = f"({rs})"
        else:
            if lp < mine:
                ls = f"({ls})"
            if rp < mine or (rp == mine and e.op in "-/"):
                rs = f"({rs})"
        return f"{ls} {e.op} {rs}" if e.op in "+-" else f"{ls}{e.op}{rs}"
    args = ", ".join(to_str(a) for a in e.args)
    return f"{e.fn}({args})"


def _codegen(e: Expr, params: Mapping[str, float]) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[{e.index - 1}]"
    if isinstance(e, Param):
        try:
            return repr(float(params[e.name]))
        except KeyError:
            raise UnknownIdentifier(f"parameter {e.name!r} has no value") from None
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg, params)})"
    if isinstance(e, Bin):
        a, b = _codegen(e.left, params), _codegen(e.right, params)
        if e.op == "^":
            return f"_pow({a}, {b})"
        return f"({a} {e.op} {b})"
    args = ", ".join(_codegen(a, params) for a in e.args)
    return f"_{e.fn}({args})"


_COMPILE_NS = {
    "_exp": math.exp, "_ln": math.log, "_sin": math.sin, "_cos": math.cos,
    "_sqrt": math.sqrt, "_pow": math.pow,
}


def compile_expr(e: Expr, params: Mapping[str, float]) -> Callable[..., float]:
    """Compile to a fast ``f(x) -> float`` with parameter values baked in.

    Raises the same NumericError as :func:`evaluate` on domain errors or
    non-finite results; agreement with the tree-walking evaluator is a
    tested property, not an assumption.
    """
    src = f"def _f(x):\n    return {_codegen(e, params)}\n"
    ns = dict(_COMPILE_NS)
    exec(compile(src, "<coneflow-expr>", "exec"), ns)
    raw = ns["_f"]

    def fn(x) -> float:
        try:
            val = raw(x)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise NumericError(f"evaluation failed: {exc}") from exc
        if not math.isfinite(val):
            raise NumericError(f"non-finite result {val!r}")
        return val

    fn.__name__ = "compiled_expr"
    return fn
