"""Arithmetic expressions in ``t`` (and ``s``) for integrands and integrators.

Grammar, highest precedence last::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | 't' | 's' | func '(' expr (',' expr)? ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so ``-t^2``
is ``-(t^2)``. Functions: exp, ln, abs, sqrt (one argument), min, max (two).

Evaluation is vectorised over numpy arrays. Domain violations raise
:class:`DomainError` instead of producing NaN. :meth:`ExprFn.bounds` gives an
outward-rounded interval enclosure of the range over a box, which is what the
integrators use for certified Darboux bounds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Mapping, Union

import numpy as np

from .errors import ArityError, DomainError, ExprSyntaxError

__all__ = [
    "Const", "Var", "Neg", "BinOp", "Call", "Sign", "Node",
    "ExprFn", "parse", "to_source", "substitute",
]


# AST -------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Node", ...]


@dataclass(frozen=True)
class Sign:
    """Sign of ``arg`` with a chosen value at zero.

    Not part of the text grammar; built by the convex catalog to express
    subgradient selections of kinked functions.
    """

    arg: "Node"
    at_zero: float = 0.0


Node = Union[Const, Var, Neg, BinOp, Call, Sign]

FUNCTIONS = {"exp": 1, "ln": 1, "abs": 1, "sqrt": 1, "min": 2, "max": 2}


# tokenizer -------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),−]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num | name | op | end
    text: str
    col: int  # 1-based


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            col = pos + 1
            while col - 1 < n and src[col - 1].isspace():
                col += 1
            raise ExprSyntaxError(f"unexpected character {src[col - 1]!r}", col, source=src)
        kind = m.lastgroup
        text = m.group(kind)
        if text == "−":
            text = "-"
        toks.append(_Tok(kind, text, m.start(kind) + 1))
        pos = m.end()
    toks.append(_Tok("end", "", n + 1))
    return toks


class _Parser:
    _ATOM_START = ("number", "t", "s", "function", "(")

    def __init__(self, src: str, variables: tuple[str, ...]):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0
        self.variables = variables

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, expected: tuple[str, ...], message: str | None = None):
        tok = self.tok
        if message is None:
            message = "unexpected end of input" if tok.kind == "end" else f"unexpected token {tok.text!r}"
        raise ExprSyntaxError(message, tok.col, expected, self.src)

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        if not self.accept(text):
            self.fail((repr(text),))

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            self.fail(("operator", "end of input"))
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.accept("-"):
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            if tok.text in FUNCTIONS:
                self.i += 1
                return self.call(tok)
            if tok.text in ("t", "s"):
                if tok.text not in self.variables:
                    raise ArityError(
                        f"variable {tok.text!r} at column {tok.col} not allowed in a "
                        f"{len(self.variables)}-variable expression"
                    )
                self.i += 1
                return Var(tok.text)
            raise ExprSyntaxError(f"unknown name {tok.text!r}", tok.col, self._ATOM_START, self.src)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        self.fail(self._ATOM_START)

    def call(self, name_tok: _Tok) -> Node:
        self.expect("(")
        args = [self.expr()]
        while self.accept(","):
            args.append(self.expr())
        self.expect(")")
        want = FUNCTIONS[name_tok.text]
        if len(args) != want:
            raise ExprSyntaxError(
                f"{name_tok.text} takes {want} argument(s), got {len(args)}", name_tok.col, source=self.src
            )
        return Call(name_tok.text, tuple(args))


# printing --------------------------------------------------------------------

# precedence levels: 0 sum, 1 product, 2 factor (negation, power), 3 atom
_LEVEL = {"+": 0, "-": 0, "*": 1, "/": 1, "^": 2}


def _num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_source(node: Node) -> str:
    """Render an AST as text that parses back to the same tree."""
    return _src(node, 0)


def _src(node: Node, need: int) -> str:
    if isinstance(node, Const):
        text, level = _num(node.value), 3
        if math.copysign(1.0, node.value) < 0:
            level = 2
    elif isinstance(node, Var):
        text, level = node.name, 3
    elif isinstance(node, Call):
        text, level = f"{node.name}({', '.join(_src(a, 0) for a in node.args)})", 3
    elif isinstance(node, Sign):
        text, level = f"sign[{_num(node.at_zero)}]({_src(node.arg, 0)})", 3
    elif isinstance(node, Neg):
        text, level = "-" + _src(node.arg, 2), 2
    elif node.op == "^":
        text, level = f"{_src(node.left, 3)}^{_src(node.right, 2)}", 2
    else:
        level = _LEVEL[node.op]
        text = f"{_src(node.left, level)} {node.op} {_src(node.right, level + 1)}"
    return f"({text})" if level < need else text


def substitute(node: Node, mapping: Mapping[str, Node]) -> Node:
    """Replace variables by sub-trees (composition of expressions)."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Const):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.arg, mapping))
    if isinstance(node, Sign):
        return Sign(substitute(node.arg, mapping), node.at_zero)
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping))
    return Call(node.name, tuple(substitute(a, mapping) for a in node.args))


def _variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Const):
        return set()
    if isinstance(node, (Neg, Sign)):
        return _variables(node.arg)
    if isinstance(node, BinOp):
        return _variables(node.left) | _variables(node.right)
    out: set[str] = set()
    for a in node.args:
        out |= _variables(a)
    return out


# pointwise evaluation --------------------------------------------------------

def _is_int(x) -> bool:
    return bool(np.all(np.floor(x) == x))


def _eval(node: Node, env: Mapping[str, np.ndarray]):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Sign):
        x = np.asarray(_eval(node.arg, env), dtype=float)
        return np.where(x > 0, 1.0, np.where(x < 0, -1.0, node.at_zero))
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if np.any(np.asarray(b) == 0):
                raise DomainError("division by zero")
            return a / b
        a_arr = np.asarray(a, dtype=float)
        b_arr = np.asarray(b, dtype=float)
        if np.any((a_arr < 0) & (np.floor(b_arr) != b_arr)):
            raise DomainError("negative base raised to a non-integer power")
        if np.any((a_arr == 0) & (b_arr < 0)):
            raise DomainError("zero raised to a negative power")
        with np.errstate(over="ignore"):
            return np.power(a_arr, b_arr)
    args = [_eval(a, env) for a in node.args]
    name = node.name
    with np.errstate(over="ignore"):
        if name == "exp":
            return np.exp(args[0])
        if name == "ln":
            if np.any(np.asarray(args[0]) <= 0):
                raise DomainError("ln of a non-positive number")
            return np.log(args[0])
        if name == "sqrt":
            if np.any(np.asarray(args[0]) < 0):
                raise DomainError("sqrt of a negative number")
            return np.sqrt(args[0])
        if name == "abs":
            return np.abs(args[0])
        if name == "min":
            return np.minimum(args[0], args[1])
        return np.maximum(args[0], args[1])


def _compile(node: Node) -> Callable[[Mapping[str, np.ndarray]], Any]:
    """Closure equivalent of :func:`_eval` with the node dispatch done once."""
    if isinstance(node, Const):
        value = node.value
        return lambda env: value
    if isinstance(node, Var):
        name = node.name
        return lambda env: env[name]
    if isinstance(node, Neg):
        arg = _compile(node.arg)
        return lambda env: -arg(env)
    if isinstance(node, (Sign, Call)) or (isinstance(node, BinOp) and node.op in ("/", "^")):
        if isinstance(node, BinOp) and node.op == "^" and isinstance(node.right, Const) \
                and float(node.right.value).is_integer() and node.right.value >= 0:
            base, expo = _compile(node.left), node.right.value

            def power(env):
                with np.errstate(over="ignore"):
                    return np.power(np.asarray(base(env), dtype=float), expo)
            return power
        if isinstance(node, Call) and node.name in ("exp", "abs", "min", "max"):
            fn = {"exp": np.exp, "abs": np.abs, "min": np.minimum, "max": np.maximum}[node.name]
            args = [_compile(a) for a in node.args]
            if len(args) == 1:
                a0 = args[0]

                def call1(env):
                    with np.errstate(over="ignore"):
                        return fn(a0(env))
                return call1
            a0, a1 = args
            return lambda env: fn(a0(env), a1(env))
        if isinstance(node, Call) and node.name in ("ln", "sqrt"):
            a0 = _compile(node.args[0])
            if node.name == "ln":
                def ln(env):
                    x = a0(env)
                    if np.any(np.asarray(x) <= 0):
                        raise DomainError("ln of a non-positive number")
                    return np.log(x)
                return ln

            def sqrt(env):
                x = a0(env)
                if np.any(np.asarray(x) < 0):
                    raise DomainError("sqrt of a negative number")
                return np.sqrt(x)
            return sqrt
        if isinstance(node, BinOp) and node.op == "/":
            num, den = _compile(node.left), _compile(node.right)

            def divide(env):
                a, b = num(env), den(env)
                if np.any(np.asarray(b) == 0):
                    raise DomainError("division by zero")
                return a / b
            return divide
        return lambda env: _eval(node, env)
    left, right = _compile(node.left), _compile(node.right)
    if node.op == "+":
        return lambda env: left(env) + right(env)
    if node.op == "-":
        return lambda env: left(env) - right(env)
    return lambda env: left(env) * right(env)


# interval evaluation ---------------------------------------------------------

_REL = 2.0 ** -50  # a few ulps for libm functions


def _out(lo, hi, loose: bool = False):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if loose:
        lo = lo - np.abs(lo) * _REL
        hi = hi + np.abs(hi) * _REL
    return np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)


def _ipow_int(lo, hi, n: int):
    if n == 0:
        return np.ones_like(lo), np.ones_like(hi)
    if n < 0:
        if np.any((lo <= 0) & (hi >= 0)):
            raise DomainError("negative power of an interval containing zero")
        plo, phi = _ipow_int(lo, hi, -n)
        return _out(1.0 / phi, 1.0 / plo)
    a = np.power(lo, n)
    b = np.power(hi, n)
    if n % 2 == 1:
        return _out(a, b, loose=True)
    low = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(a, b))
    return _out(low, np.maximum(a, b), loose=True)


def _bounds(node: Node, env):
    if isinstance(node, Const):
        v = np.float64(node.value)
        return v, v
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        lo, hi = _bounds(node.arg, env)
        return -hi, -lo
    if isinstance(node, Sign):
        lo, hi = _bounds(node.arg, env)
        z = node.at_zero

        def sgn(x):
            return np.where(x > 0, 1.0, np.where(x < 0, -1.0, z))

        return np.minimum(sgn(lo), sgn(hi)), np.maximum(sgn(lo), sgn(hi))
    if isinstance(node, BinOp):
        op = node.op
        if op == "^" and isinstance(node.right, Const) and float(node.right.value).is_integer():
            lo, hi = _bounds(node.left, env)
            return _ipow_int(np.asarray(lo, float), np.asarray(hi, float), int(node.right.value))
        alo, ahi = _bounds(node.left, env)
        blo, bhi = _bounds(node.right, env)
        if op == "+":
            return _out(alo + blo, ahi + bhi)
        if op == "-":
            return _out(alo - bhi, ahi - blo)
        if op == "*":
            c = [alo * blo, alo * bhi, ahi * blo, ahi * bhi]
            return _out(np.minimum.reduce(c), np.maximum.reduce(c))
        if op == "/":
            if np.any((blo <= 0) & (bhi >= 0)):
                raise DomainError("division by an interval containing zero")
            c = [alo / blo, alo / bhi, ahi / blo, ahi / bhi]
            return _out(np.minimum.reduce(c), np.maximum.reduce(c))
        # general power: base must be positive
        if np.any(np.asarray(alo) < 0) or (np.any(np.asarray(alo) == 0) and np.any(np.asarray(blo) <= 0)):
            if isinstance(node.right, Const) and node.right.value > 0 and not np.any(np.asarray(alo) < 0):
                p = node.right.value
                return _out(np.power(alo, p), np.power(ahi, p), loose=True)
            raise DomainError("non-integer power of an interval reaching non-positive values")
        if isinstance(node.right, Const):
            p = node.right.value
            a, b = np.power(alo, p), np.power(ahi, p)
            return _out(np.minimum(a, b), np.maximum(a, b), loose=True)
        llo, lhi = _out(np.log(alo), np.log(ahi), loose=True)
        c = [llo * blo, llo * bhi, lhi * blo, lhi * bhi]
        return _out(np.exp(np.minimum.reduce(c)), np.exp(np.maximum.reduce(c)), loose=True)
    name = node.name
    if name in ("min", "max"):
        (alo, ahi), (blo, bhi) = (_bounds(a, env) for a in node.args)
        f = np.minimum if name == "min" else np.maximum
        return f(alo, blo), f(ahi, bhi)
    lo, hi = _bounds(node.args[0], env)
    if name == "exp":
        return _out(np.exp(lo), np.exp(hi), loose=True)
    if name == "ln":
        if np.any(np.asarray(lo) <= 0):
            raise DomainError("ln of an interval reaching non-positive values")
        return _out(np.log(lo), np.log(hi), loose=True)
    if name == "sqrt":
        if np.any(np.asarray(lo) < 0):
            raise DomainError("sqrt of an interval reaching negative values")
        return _out(np.sqrt(lo), np.sqrt(hi))
    # abs
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    low = np.where(lo >= 0, lo, np.where(hi <= 0, -hi, 0.0))
    return low, np.maximum(np.abs(lo), np.abs(hi))


# public function object ------------------------------------------------------

@dataclass(frozen=True)
class ExprFn:
    """A parsed expression of one (``t``) or two (``t``, ``s``) variables."""

    ast: Node
    arity: int = 1

    def __post_init__(self):
        if self.arity not in (1, 2):
            raise ArityError("arity must be 1 or 2")
        allowed = {"t"} if self.arity == 1 else {"t", "s"}
        extra = _variables(self.ast) - allowed
        if extra:
            raise ArityError(f"variables {sorted(extra)} not allowed with arity {self.arity}")

    @cached_property
    def source(self) -> str:
        return to_source(self.ast)

    @cached_property
    def _compiled(self):
        return _compile(self.ast)

    def __str__(self) -> str:
        return self.source

    def is_constant(self) -> bool:
        return not _variables(self.ast)

    def __call__(self, t, s=None):
        if self.arity == 2 and s is None:
            raise ArityError("bivariate expression needs both t and s")
        if self.arity == 1 and s is not None:
            raise ArityError("univariate expression called with two arguments")
        scalar = np.ndim(t) == 0 and (s is None or np.ndim(s) == 0)
        env = {"t": np.asarray(t, dtype=float)}
        if s is not None:
            env["s"] = np.asarray(s, dtype=float)
        shape = np.broadcast_shapes(*(np.shape(v) for v in env.values()))
        out = np.broadcast_to(np.asarray(self._compiled(env), dtype=float), shape)
        if not np.all(np.isfinite(out)):
            raise DomainError(f"non-finite value of {self.source}")
        return float(out) if scalar else np.array(out)

    def bounds(self, tlo, thi, slo=None, shi=None):
        """Outward-rounded enclosure of the range over ``[tlo,thi] x [slo,shi]``."""
        env = {"t": (np.asarray(tlo, float), np.asarray(thi, float))}
        if self.arity == 2:
            if slo is None:
                raise ArityError("bivariate bounds need an s-box")
            env["s"] = (np.asarray(slo, float), np.asarray(shi, float))
        with np.errstate(over="ignore", invalid="ignore"):
            lo, hi = _bounds(self.ast, env)
        shape = np.broadcast_shapes(*(np.shape(v[0]) for v in env.values()))
        lo = np.broadcast_to(np.asarray(lo, float), shape)
        hi = np.broadcast_to(np.asarray(hi, float), shape)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DomainError(f"unbounded enclosure of {self.source}")
        return np.array(lo), np.array(hi)

    # composition helpers used by the inequality checks
    def compose(self, inner: "ExprFn") -> "ExprFn":
        """``self(inner(t))`` for a univariate ``self``."""
        return ExprFn(substitute(self.ast, {"t": inner.ast}), inner.arity)

    def in_s(self) -> "ExprFn":
        """The same univariate function written in the variable ``s``."""
        return ExprFn(substitute(self.ast, {"t": Var("s")}), 2)

    def as_bivariate(self) -> "ExprFn":
        return ExprFn(self.ast, 2)

    def _combine(self, op: str, other) -> "ExprFn":
        if not isinstance(other, ExprFn):
            other = ExprFn(Const(float(other)), self.arity)
        return ExprFn(BinOp(op, self.ast, other.ast), max(self.arity, other.arity))

    def __add__(self, other):
        return self._combine("+", other)

    def __sub__(self, other):
        return self._combine("-", other)

    def __mul__(self, other):
        return self._combine("*", other)

    def __truediv__(self, other):
        return self._combine("/", other)

    def __rmul__(self, other):
        return ExprFn(Const(float(other)), self.arity)._combine("*", self)

    def __neg__(self):
        return ExprFn(Neg(self.ast), self.arity)


def parse(src: str, arity: int = 1) -> ExprFn:
    """Parse expression text; raises :class:`ExprSyntaxError` with a column."""
    if arity not in (1, 2):
        raise ArityError("arity must be 1 or 2")
    variables = ("t",) if arity == 1 else ("t", "s")
    return ExprFn(_Parser(src, variables).parse(), arity)


def constant(value: float, arity: int = 1) -> ExprFn:
    return ExprFn(Const(float(value)), arity)


def identity() -> ExprFn:
    return ExprFn(Var("t"), 1)
