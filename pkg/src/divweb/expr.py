"""Symbolic scalar expressions over named variables.

This is the substrate for every density, tensor entry and metric
coefficient in the package: a small immutable expression tree with a
recursive-descent parser, IEEE-double evaluation (scalar or vectorised
over numpy arrays), exact symbolic differentiation and a deliberately
shallow simplifier (constant folding, 0/1 identities, neutral-element
flattening).  Pointwise numerical comparison, not algebraic rewriting,
is the equality oracle throughout.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = factor { ("*" | "/") factor } ;
    factor  = "-" factor | power ;
    power   = atom [ "^" factor ] ;
    atom    = NUMBER | NAME | NAME "(" expr ")" | "(" expr ")" ;

``^`` is right-associative and binds tighter than unary minus, which
binds tighter than ``*``/``/``, which bind tighter than ``+``/``-``.
Recognised functions: ``exp``, ``log``, ``sqrt``, ``sin``, ``cos``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Neg", "Exp", "Log", "Sqrt", "Sin", "Cos",
    "Add", "Sub", "Mul", "Div", "Pow",
    "ExprError", "ParseError", "UnknownVariableError", "EvalDomainError",
    "parse_expr", "evaluate", "differentiate", "simplify", "substitute",
    "is_identically_zero", "ZeroVerdict", "grid_bindings",
]

Number = Union[int, float]


class ExprError(Exception):
    """Base class for expression-layer failures."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int, expected: str | None = None):
        detail = f"{message} at position {position}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)
        self.position = position
        self.expected = expected


class UnknownVariableError(ParseError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown variable '{name}'", position)
        self.name = name


class EvalDomainError(ExprError):
    """Evaluation hit a point outside a subexpression's domain."""

    def __init__(self, message: str, expression: "Expr"):
        super().__init__(f"{message} in '{expression}'")
        self.expression = expression


# ---------------------------------------------------------------------------
# nodes

class Expr:
    """Immutable expression-tree node.

    Nodes are shared freely: all operations are pure, so a subtree may
    appear in several parents and expressions are safe to evaluate from
    multiple threads.
    """

    __slots__ = ()
    precedence = 9

    # -- arithmetic sugar -------------------------------------------------
    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Sub(self, _coerce(other))

    def __rsub__(self, other):
        return Sub(_coerce(other), self)

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __pow__(self, other):
        return Pow(self, _coerce(other))

    def __neg__(self):
        return Neg(self)

    # -- interface implemented by every subclass --------------------------
    def children(self) -> tuple["Expr", ...]:
        return ()

    def variables(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for child in self.children():
            out |= child.variables()
        return out

    def evaluate(self, binding: Mapping[str, object]):
        raise NotImplementedError

    def derivative(self, var: str) -> "Expr":
        raise NotImplementedError

    def simplified(self) -> "Expr":
        return self

    def substituted(self, mapping: Mapping[str, "Expr"]) -> "Expr":
        return self

    def __repr__(self):
        return f"<{type(self).__name__} {self}>"


def _coerce(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot use {value!r} as an expression")


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Number):
        object.__setattr__(self, "value", float(value))

    def __setattr__(self, name, value):  # immutable after construction
        raise AttributeError("expressions are immutable")

    def __eq__(self, other):
        return isinstance(other, Const) and self.value == other.value

    def __hash__(self):
        return hash(("const", self.value))

    @property
    def precedence(self):
        return 9 if self.value >= 0 else 3

    def evaluate(self, binding):
        return self.value

    def derivative(self, var):
        return Const(0.0)

    def __str__(self):
        v = self.value
        if v == int(v) and abs(v) < 1e16:
            return str(int(v))
        return repr(v)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def __eq__(self, other):
        return isinstance(other, Var) and self.name == other.name

    def __hash__(self):
        return hash(("var", self.name))

    def variables(self):
        return frozenset((self.name,))

    def evaluate(self, binding):
        try:
            return binding[self.name]
        except KeyError:
            raise EvalDomainError(f"no value bound for '{self.name}'", self) from None

    def derivative(self, var):
        return Const(1.0 if var == self.name else 0.0)

    def substituted(self, mapping):
        return mapping.get(self.name, self)

    def __str__(self):
        return self.name


class _UnaryOp(Expr):
    __slots__ = ("arg",)
    symbol = "?"

    def __init__(self, arg: Expr):
        object.__setattr__(self, "arg", _coerce(arg))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def __eq__(self, other):
        return type(other) is type(self) and self.arg == other.arg

    def __hash__(self):
        return hash((self.symbol, self.arg))

    def children(self):
        return (self.arg,)

    def substituted(self, mapping):
        return type(self)(self.arg.substituted(mapping))

    def simplified(self):
        arg = self.arg.simplified()
        node = type(self)(arg)
        if isinstance(arg, Const):
            folded = node._fold(arg.value)
            if folded is not None:
                return Const(folded)
        return node

    def _fold(self, value: float) -> float | None:
        return None

    def __str__(self):
        return f"{self.symbol}({self.arg})"


class Neg(_UnaryOp):
    __slots__ = ()
    symbol = "neg"
    precedence = 3

    def evaluate(self, binding):
        return -self.arg.evaluate(binding)

    def derivative(self, var):
        return _neg(self.arg.derivative(var))

    def simplified(self):
        arg = self.arg.simplified()
        if isinstance(arg, Const):
            return Const(-arg.value)
        if isinstance(arg, Neg):
            return arg.arg
        return Neg(arg)

    def __str__(self):
        inner = self.arg
        if inner.precedence < Neg.precedence:
            return f"-({inner})"
        return f"-{inner}"


class Exp(_UnaryOp):
    __slots__ = ()
    symbol = "exp"

    def evaluate(self, binding):
        return np.exp(self.arg.evaluate(binding))

    def derivative(self, var):
        return _mul(self.arg.derivative(var), self)

    def _fold(self, value):
        return math.exp(value) if value < 700 else None


class Log(_UnaryOp):
    __slots__ = ()
    symbol = "log"

    def evaluate(self, binding):
        v = self.arg.evaluate(binding)
        if np.any(np.asarray(v) <= 0.0):
            raise EvalDomainError("log of non-positive value", self)
        return np.log(v)

    def derivative(self, var):
        return _div(self.arg.derivative(var), self.arg)

    def _fold(self, value):
        return math.log(value) if value > 0 else None


class Sqrt(_UnaryOp):
    __slots__ = ()
    symbol = "sqrt"

    def evaluate(self, binding):
        v = self.arg.evaluate(binding)
        if np.any(np.asarray(v) < 0.0):
            raise EvalDomainError("sqrt of negative value", self)
        return np.sqrt(v)

    def derivative(self, var):
        return _div(self.arg.derivative(var), _mul(Const(2.0), self))

    def _fold(self, value):
        return math.sqrt(value) if value >= 0 else None


class Sin(_UnaryOp):
    __slots__ = ()
    symbol = "sin"

    def evaluate(self, binding):
        return np.sin(self.arg.evaluate(binding))

    def derivative(self, var):
        return _mul(self.arg.derivative(var), Cos(self.arg))

    def _fold(self, value):
        return math.sin(value)


class Cos(_UnaryOp):
    __slots__ = ()
    symbol = "cos"

    def evaluate(self, binding):
        return np.cos(self.arg.evaluate(binding))

    def derivative(self, var):
        return _neg(_mul(self.arg.derivative(var), Sin(self.arg)))

    def _fold(self, value):
        return math.cos(value)


class _BinaryOp(Expr):
    __slots__ = ("left", "right")
    symbol = "?"

    def __init__(self, left: Expr, right: Expr):
        object.__setattr__(self, "left", _coerce(left))
        object.__setattr__(self, "right", _coerce(right))

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def __eq__(self, other):
        return (type(other) is type(self)
                and self.left == other.left and self.right == other.right)

    def __hash__(self):
        return hash((self.symbol, self.left, self.right))

    def children(self):
        return (self.left, self.right)

    def substituted(self, mapping):
        return type(self)(self.left.substituted(mapping),
                          self.right.substituted(mapping))

    def _wrap(self, child: Expr, min_prec: int) -> str:
        text = str(child)
        return f"({text})" if child.precedence < min_prec else text

    def __str__(self):
        # Right operand is parenthesised at equal precedence so that the
        # printed text re-parses to this exact tree under left association.
        return (f"{self._wrap(self.left, self.precedence)} {self.symbol} "
                f"{self._wrap(self.right, self.precedence + 1)}")


class Add(_BinaryOp):
    __slots__ = ()
    symbol = "+"
    precedence = 1

    def evaluate(self, binding):
        return self.left.evaluate(binding) + self.right.evaluate(binding)

    def derivative(self, var):
        return _add(self.left.derivative(var), self.right.derivative(var))

    def simplified(self):
        return _add(self.left.simplified(), self.right.simplified())


class Sub(_BinaryOp):
    __slots__ = ()
    symbol = "-"
    precedence = 1

    def evaluate(self, binding):
        return self.left.evaluate(binding) - self.right.evaluate(binding)

    def derivative(self, var):
        return _sub(self.left.derivative(var), self.right.derivative(var))

    def simplified(self):
        return _sub(self.left.simplified(), self.right.simplified())


class Mul(_BinaryOp):
    __slots__ = ()
    symbol = "*"
    precedence = 2

    def evaluate(self, binding):
        return self.left.evaluate(binding) * self.right.evaluate(binding)

    def derivative(self, var):
        u, v = self.left, self.right
        return _add(_mul(u.derivative(var), v), _mul(u, v.derivative(var)))

    def simplified(self):
        return _mul(self.left.simplified(), self.right.simplified())

    def __str__(self):
        return (f"{self._wrap(self.left, self.precedence)}{self.symbol}"
                f"{self._wrap(self.right, self.precedence + 1)}")


class Div(_BinaryOp):
    __slots__ = ()
    symbol = "/"
    precedence = 2

    def evaluate(self, binding):
        num = self.left.evaluate(binding)
        den = self.right.evaluate(binding)
        if np.any(np.asarray(den) == 0.0):
            raise EvalDomainError("division by zero", self)
        return num / den

    def derivative(self, var):
        u, v = self.left, self.right
        return _div(_sub(_mul(u.derivative(var), v), _mul(u, v.derivative(var))),
                    _mul(v, v))

    def simplified(self):
        return _div(self.left.simplified(), self.right.simplified())

    def __str__(self):
        return (f"{self._wrap(self.left, self.precedence)}{self.symbol}"
                f"{self._wrap(self.right, self.precedence + 1)}")


class Pow(_BinaryOp):
    __slots__ = ()
    symbol = "^"
    precedence = 4

    def evaluate(self, binding):
        base = self.left.evaluate(binding)
        expo = self.right.evaluate(binding)
        base_arr = np.asarray(base)
        expo_arr = np.asarray(expo)
        if np.any((base_arr < 0.0) & (expo_arr != np.round(expo_arr))):
            raise EvalDomainError("negative base with non-integer exponent", self)
        if np.any((base_arr == 0.0) & (expo_arr < 0.0)):
            raise EvalDomainError("zero base with negative exponent", self)
        return base ** expo

    def derivative(self, var):
        u, v = self.left, self.right
        if isinstance(v, Const):
            return _mul(_mul(v, _pow(u, Const(v.value - 1.0))), u.derivative(var))
        if isinstance(u, Const):
            return _mul(_mul(self, Log(u)), v.derivative(var))
        return _mul(self, _add(_mul(v.derivative(var), Log(u)),
                               _div(_mul(v, u.derivative(var)), u)))

    def simplified(self):
        return _pow(self.left.simplified(), self.right.simplified())

    def __str__(self):
        # Left operand parenthesised at equal precedence: ^ is right-assoc.
        left = str(self.left)
        if self.left.precedence <= Pow.precedence:
            left = f"({left})"
        # The exponent slot accepts a factor, so Neg and Pow print bare.
        right = str(self.right)
        if self.right.precedence < Neg.precedence:
            right = f"({right})"
        return f"{left}^{right}"


# ---------------------------------------------------------------------------
# folding constructors, shared by the simplifier and the derivative rules

def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if a == b:
        return Const(0.0)
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def _pow(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return Const(1.0)
    if _is_const(a, 1.0):
        return Const(1.0)
    if _is_const(a) and _is_const(b):
        if a.value >= 0 or b.value == round(b.value):
            try:
                return Const(a.value ** b.value)
            except (OverflowError, ZeroDivisionError):
                pass
    return Pow(a, b)


# ---------------------------------------------------------------------------
# public operations

def evaluate(e: Expr, binding: Mapping[str, object]):
    """Evaluate ``e`` at a binding of variable names to floats or arrays."""
    return e.evaluate(binding)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var``."""
    return e.derivative(var).simplified()


def simplify(e: Expr) -> Expr:
    """Pointwise-equal expression after constant folding and 0/1 identities."""
    return e.simplified()


def substitute(e: Expr, mapping: Mapping[str, object]) -> Expr:
    """Replace variables by expressions or numbers."""
    coerced = {name: _coerce(v) for name, v in mapping.items()}
    return e.substituted(coerced)


@dataclass(frozen=True)
class ZeroVerdict:
    """Outcome of an is-this-zero decision.

    ``kind`` is one of ``symbolic-zero`` (the simplifier reached the
    constant 0), ``numerically-zero`` (sampled maximum below tolerance)
    or ``nonzero`` (with the max-|value| sample as witness).
    """

    kind: str
    max_abs: float
    witness: dict[str, float] | None = None

    SYMBOLIC = "symbolic-zero"
    NUMERIC = "numerically-zero"
    NONZERO = "nonzero"

    @property
    def is_zero(self) -> bool:
        return self.kind != ZeroVerdict.NONZERO


def grid_bindings(bounds: Mapping[str, tuple[float, float]],
                  per_axis: int) -> dict[str, np.ndarray]:
    """Flattened product grid over a box, one array per variable."""
    names = list(bounds)
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in bounds.values()]
    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    return {name: grid.ravel() for name, grid in zip(names, mesh)}


def is_identically_zero(e: Expr,
                        bounds: Mapping[str, tuple[float, float]],
                        samples: int = 33,
                        tol: float = 1e-9) -> ZeroVerdict:
    """Decide whether ``e`` vanishes on the box described by ``bounds``.

    Symbolic zero is preferred when the simplifier reaches it; otherwise
    ``e`` is sampled on a ``samples``-per-axis product grid and judged
    against ``tol``.  ``bounds`` must cover every free variable.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    simplified = e.simplified()
    if _is_const(simplified, 0.0):
        return ZeroVerdict(ZeroVerdict.SYMBOLIC, 0.0)
    free = simplified.variables()
    if not free:
        value = float(simplified.evaluate({}))
        if abs(value) <= tol:
            return ZeroVerdict(ZeroVerdict.NUMERIC, abs(value))
        return ZeroVerdict(ZeroVerdict.NONZERO, abs(value), {})
    missing = free - set(bounds)
    if missing:
        raise ValueError(f"no bounds for variables {sorted(missing)}")
    binding = grid_bindings({v: bounds[v] for v in sorted(free)}, samples)
    values = np.abs(np.asarray(simplified.evaluate(binding), dtype=float))
    if values.ndim == 0:
        values = np.full(len(next(iter(binding.values()))), float(values))
    peak = int(np.argmax(values))
    max_abs = float(values[peak])
    if max_abs <= tol:
        return ZeroVerdict(ZeroVerdict.NUMERIC, max_abs)
    witness = {name: float(arr[peak]) for name, arr in binding.items()}
    return ZeroVerdict(ZeroVerdict.NONZERO, max_abs, witness)


# ---------------------------------------------------------------------------
# parser

_FUNCTIONS = {"exp": Exp, "log": Log, "sqrt": Sqrt, "sin": Sin, "cos": Cos}


class _Tokenizer:
    def __init__(self, source: str):
        self.source = source
        self.pos = 0
        self.tokens: list[tuple[str, str, int]] = []
        self._scan()
        self.index = 0

    def _scan(self):
        src, n = self.source, len(self.source)
        i = 0
        while i < n:
            c = src[i]
            if c.isspace():
                i += 1
                continue
            if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
                j = i
                while j < n and (src[j].isdigit() or src[j] == "."):
                    j += 1
                if j < n and src[j] in "eE":
                    k = j + 1
                    if k < n and src[k] in "+-":
                        k += 1
                    if k < n and src[k].isdigit():
                        j = k
                        while j < n and src[j].isdigit():
                            j += 1
                text = src[i:j]
                try:
                    float(text)
                except ValueError:
                    raise ParseError(f"malformed number '{text}'", i) from None
                self.tokens.append(("num", text, i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (src[j].isalnum() or src[j] == "_"):
                    j += 1
                self.tokens.append(("name", src[i:j], i))
                i = j
                continue
            if c in "+-*/^":
                self.tokens.append(("op", c, i))
            elif c == "(":
                self.tokens.append(("lparen", c, i))
            elif c == ")":
                self.tokens.append(("rparen", c, i))
            elif c == ",":
                self.tokens.append(("comma", c, i))
            else:
                raise ParseError(f"unexpected character '{c}'", i)
            i += 1
        self.tokens.append(("end", "", n))

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        tok = self.tokens[self.index]
        if tok[0] != "end":
            self.index += 1
        return tok


class _Parser:
    def __init__(self, source: str, allowed_vars: frozenset[str]):
        self.toks = _Tokenizer(source)
        self.allowed = allowed_vars

    def parse(self) -> Expr:
        e = self._expr()
        kind, text, pos = self.toks.peek()
        if kind != "end":
            raise ParseError(f"unexpected '{text}'", pos, "end of input")
        return e

    def _expr(self) -> Expr:
        node = self._term()
        while True:
            kind, text, _ = self.toks.peek()
            if kind == "op" and text in "+-":
                self.toks.advance()
                rhs = self._term()
                node = Add(node, rhs) if text == "+" else Sub(node, rhs)
            else:
                return node

    def _term(self) -> Expr:
        node = self._factor()
        while True:
            kind, text, _ = self.toks.peek()
            if kind == "op" and text in "*/":
                self.toks.advance()
                rhs = self._factor()
                node = Mul(node, rhs) if text == "*" else Div(node, rhs)
            else:
                return node

    def _factor(self) -> Expr:
        kind, text, _ = self.toks.peek()
        if kind == "op" and text == "-":
            self.toks.advance()
            return Neg(self._factor())
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        kind, text, _ = self.toks.peek()
        if kind == "op" and text == "^":
            self.toks.advance()
            return Pow(base, self._factor())
        return base

    def _atom(self) -> Expr:
        kind, text, pos = self.toks.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            nkind, _, _ = self.toks.peek()
            if nkind == "lparen":
                return self._call(text, pos)
            if text not in self.allowed:
                raise UnknownVariableError(text, pos)
            return Var(text)
        if kind == "lparen":
            inner = self._expr()
            self._expect("rparen", ")")
            return inner
        raise ParseError(f"unexpected '{text or 'end of input'}'", pos,
                         "number, name or '('")

    def _call(self, name: str, pos: int) -> Expr:
        if name not in _FUNCTIONS:
            raise ParseError(f"unknown function '{name}'", pos,
                             "one of " + ", ".join(sorted(_FUNCTIONS)))
        self.toks.advance()  # consume '('
        arg = self._expr()
        kind, _, cpos = self.toks.peek()
        if kind == "comma":
            raise ParseError(f"'{name}' takes exactly one argument", cpos, "')'")
        self._expect("rparen", ")")
        return _FUNCTIONS[name](arg)

    def _expect(self, kind: str, what: str):
        got_kind, text, pos = self.toks.advance()
        if got_kind != kind:
            raise ParseError(f"unexpected '{text or 'end of input'}'", pos, what)


def parse_expr(source: str, allowed_vars: Iterable[str]) -> Expr:
    """Parse ``source`` into an expression tree.

    Identifiers other than the recognised function names must be listed
    in ``allowed_vars``; anything else is rejected with its position.
    """
    return _Parser(source, frozenset(allowed_vars)).parse()
