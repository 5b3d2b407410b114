"""Symbolic expressions for the nonlinear part of a second-order ODE.

Expressions are small immutable trees over the variables ``x, y, dy, ddy,
eps``, named parameters (``lambda`` and the built-in constant ``pi``) and
real constants.  The module provides parsing, printing, symbolic
differentiation, evaluation (scalar or vectorised over numpy arrays) and the
Taylor-in-epsilon bookkeeping used to build correction equations.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' integer)?
    base   := number | ident | '(' expr ')' | func '(' expr ')' | '-' base

Note that unary minus belongs to ``base``, so ``-y^2`` parses as ``(-y)^2``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Mapping, Union

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnboundSymbolError, UnknownIdentifierError

__all__ = [
    "Expr", "Const", "Param", "Var", "Unary", "Binary", "Pow",
    "VARIABLES", "PARAMETERS", "BUILTIN_CONSTANTS", "FUNCTIONS",
    "parse", "to_text", "simplify", "differentiate", "eval_at",
    "insert_epsilon", "substitute", "free_symbols", "contains_var",
    "is_zero", "is_constant", "EpsTaylorTerms", "eps_taylor",
]

VARIABLES = ("x", "y", "dy", "ddy", "eps")
PARAMETERS = ("lambda",)
BUILTIN_CONSTANTS = {"pi": math.pi}
FUNCTIONS = ("exp", "sin", "cos", "sinh", "cosh", "ln")

Number = Union[float, np.ndarray]


class Expr:
    """Base class of all expression nodes.

    Arithmetic operators build new simplified trees, which keeps derivative
    construction readable.
    """

    def __str__(self):
        return to_text(self)

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer exponents are supported")
        return power(self, n)


@dataclass(frozen=True, eq=True, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Param(Expr):
    name: str

    def __repr__(self):
        return f"Param({self.name!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Var(Expr):
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ValueError(f"unknown variable {self.name!r}")

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Unary(Expr):
    func: str  # one of FUNCTIONS or "neg"
    arg: Expr

    def __repr__(self):
        return f"Unary({self.func!r}, {self.arg!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Binary(Expr):
    op: str  # add, sub, mul, div
    left: Expr
    right: Expr

    def __repr__(self):
        return f"Binary({self.op!r}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, (int, np.integer)) or isinstance(self.exponent, bool):
            raise TypeError("pow exponents must be integers")

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exponent})"


ZERO = Const(0.0)
ONE = Const(1.0)


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to an expression")


# ---------------------------------------------------------------------------
# smart constructors (minimal simplification)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _fold_unary(func: str, value: float) -> float | None:
    try:
        if func == "neg":
            return -value
        if func == "ln" and value <= 0:
            return None
        # same kernels as eval_at, so folding never changes a value
        with np.errstate(all="ignore"):
            return float(_NUMPY_FUNCS[func](value))
    except (OverflowError, ValueError):
        return None


def neg(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Unary) and e.func == "neg":
        return e.arg
    return Unary("neg", e)


def func(name: str, arg: Expr) -> Expr:
    if name == "neg":
        return neg(arg)
    if isinstance(arg, Const):
        folded = _fold_unary(name, arg.value)
        if folded is not None and math.isfinite(folded):
            return Const(folded)
    return Unary(name, arg)


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Binary("div", a, b)


def power(base: Expr, n: int) -> Expr:
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Const):
        if base.value != 0.0 or n > 0:
            try:
                return Const(base.value ** n)
            except OverflowError:
                pass
    return Pow(base, n)


def simplify(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the simplifying constructors."""
    if isinstance(e, (Const, Param, Var)):
        return e
    if isinstance(e, Unary):
        return func(e.func, simplify(e.arg))
    if isinstance(e, Pow):
        return power(simplify(e.base), e.exponent)
    left, right = simplify(e.left), simplify(e.right)
    return {"add": add, "sub": sub, "mul": mul, "div": div}[e.op](left, right)


def is_zero(e: Expr) -> bool:
    return _is_const(simplify(e), 0.0)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass
class _Token:
    kind: str  # num, ident, op, end
    text: str
    pos: int  # 1-based column


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        m = _TOKEN.match(text, i)
        if m is None or m.end() == i:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", i + 1)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(_Token(kind, m.group(kind), start + 1))
        i = m.end()
    tokens.append(_Token("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Token:
        if self.tok.text != text or self.tok.kind != "op":
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", self.tok.pos)
        return self.take()

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = "add" if self.take().text == "+" else "sub"
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = "mul" if self.take().text == "*" else "div"
            e = Binary(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        e = self.base()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.take()
            sign = 1
            if self.tok.kind == "op" and self.tok.text == "-":
                self.take()
                sign = -1
            t = self.tok
            if t.kind != "num" or not t.text.isdigit():
                raise ExprSyntaxError("integer exponent expected", t.pos)
            self.take()
            e = Pow(e, sign * int(t.text))
        return e

    def base(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.take()
            return Const(float(t.text))
        if t.kind == "op" and t.text == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "op" and t.text == "-":
            self.take()
            return Unary("neg", self.base())
        if t.kind == "ident":
            self.take()
            name = t.text
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(name, arg)
            if name in VARIABLES:
                return Var(name)
            if name in PARAMETERS or name in BUILTIN_CONSTANTS:
                return Param(name)
            raise UnknownIdentifierError(f"unknown identifier {name!r}", t.pos)
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(f"unexpected {found}", t.pos)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree (no simplification applied)."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2}


def _num_text(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _base_text(e: Expr) -> str:
    """Text that is valid in ``base`` position."""
    if isinstance(e, Const) and e.value >= 0:
        return _num_text(e.value)
    if isinstance(e, (Param, Var)):
        return e.name
    if isinstance(e, Unary):
        if e.func == "neg":
            return "-" + _base_text(e.arg)
        return f"{e.func}({to_text(e.arg)})"
    return f"({to_text(e)})"


def to_text(e: Expr) -> str:
    """Render ``e`` so that ``parse(to_text(e))`` rebuilds the same tree."""
    if isinstance(e, Const):
        return _num_text(e.value) if e.value >= 0 else f"(-{_num_text(-e.value)})"
    if isinstance(e, (Param, Var, Unary)):
        return _base_text(e)
    if isinstance(e, Pow):
        base = e.base
        text = _base_text(base)
        if isinstance(base, Unary) and base.func == "neg":
            text = f"({text})"
        return f"{text}^{e.exponent}"
    prec = _PREC[e.op]
    left = to_text(e.left)
    if isinstance(e.left, Binary) and _PREC[e.left.op] < prec:
        left = f"({left})"
    right = to_text(e.right)
    if isinstance(e.right, Binary) and _PREC[e.right.op] <= prec:
        right = f"({right})"
    if prec == 1:
        return f"{left} {'+' if e.op == 'add' else '-'} {right}"
    return f"{left}{'*' if e.op == 'mul' else '/'}{right}"


# ---------------------------------------------------------------------------
# structure queries


def free_symbols(e: Expr) -> set[str]:
    """Names of all variables and parameters appearing in ``e``."""
    if isinstance(e, Const):
        return set()
    if isinstance(e, (Param, Var)):
        return {e.name}
    if isinstance(e, Unary):
        return free_symbols(e.arg)
    if isinstance(e, Pow):
        return free_symbols(e.base)
    return free_symbols(e.left) | free_symbols(e.right)


def contains_var(e: Expr, names=VARIABLES) -> bool:
    return any(s in names for s in free_symbols(e) if s in VARIABLES)


def is_constant(e: Expr) -> bool:
    """True when ``e`` depends on no variable (parameters are allowed)."""
    return not contains_var(e)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables/parameters by expressions (no simplification)."""
    if isinstance(e, Const):
        return e
    if isinstance(e, (Param, Var)):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        return Unary(e.func, substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), e.exponent)
    return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))


def insert_epsilon(n: Expr) -> Expr:
    """Embed the artificial perturbation parameter: y -> eps*y (and dy, ddy).

    Expressions that already mention ``eps`` are returned unchanged.
    """
    if "eps" in free_symbols(n):
        return n
    eps = Var("eps")
    return substitute(n, {v: Binary("mul", eps, Var(v)) for v in ("y", "dy", "ddy")})


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``v``."""
    if v not in VARIABLES:
        raise ValueError(f"cannot differentiate with respect to {v!r}")
    return _diff(e, v)


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, (Const, Param)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if isinstance(e, Unary):
        u = simplify(e.arg)
        du = _diff(u, v)
        if is_zero(du):
            return ZERO
        if e.func == "neg":
            return neg(du)
        outer = {
            "exp": lambda: func("exp", u),
            "sin": lambda: func("cos", u),
            "cos": lambda: neg(func("sin", u)),
            "sinh": lambda: func("cosh", u),
            "cosh": lambda: func("sinh", u),
        }
        if e.func == "ln":
            return div(du, u)
        return mul(outer[e.func](), du)
    if isinstance(e, Pow):
        b = simplify(e.base)
        db = _diff(b, v)
        n = e.exponent
        return mul(mul(Const(float(n)), power(b, n - 1)), db)
    a, b = simplify(e.left), simplify(e.right)
    da, db = _diff(a, v), _diff(b, v)
    if e.op == "add":
        return add(da, db)
    if e.op == "sub":
        return sub(da, db)
    if e.op == "mul":
        return add(mul(da, b), mul(a, db))
    # quotient rule
    return div(sub(mul(da, b), mul(a, db)), power(b, 2))


# ---------------------------------------------------------------------------
# evaluation

_NUMPY_FUNCS = {
    "exp": np.exp, "sin": np.sin, "cos": np.cos,
    "sinh": np.sinh, "cosh": np.cosh, "ln": np.log,
}


def eval_at(e: Expr, bindings: Mapping[str, Number], params: Mapping[str, float] | None = None) -> Number:
    """Evaluate ``e``; accepts floats or numpy arrays as variable values.

    Raises
    ------
    UnboundSymbolError
        if a variable or parameter in ``e`` has no value.
    DomainError
        on division by zero, ln of a non-positive value or a non-integer
        power of zero.
    """
    params = {} if params is None else params
    with np.errstate(over="ignore", invalid="ignore"):
        return _eval(e, bindings, params)


def _eval(e, bindings, params):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise UnboundSymbolError(f"no value bound for variable {e.name!r}") from None
    if isinstance(e, Param):
        if e.name in params:
            return params[e.name]
        if e.name in BUILTIN_CONSTANTS:
            return BUILTIN_CONSTANTS[e.name]
        raise UnboundSymbolError(f"no value bound for parameter {e.name!r}")
    if isinstance(e, Unary):
        a = _eval(e.arg, bindings, params)
        if e.func == "neg":
            return -a
        if e.func == "ln" and np.any(np.asarray(a) <= 0):
            raise DomainError("ln of a non-positive value")
        r = _NUMPY_FUNCS[e.func](a)
        return float(r) if np.ndim(r) == 0 else r
    if isinstance(e, Pow):
        b = _eval(e.base, bindings, params)
        if e.exponent < 0 and np.any(np.asarray(b) == 0):
            raise DomainError("division by zero in negative power")
        if np.ndim(b) == 0:
            b = float(b)
            try:
                return b ** e.exponent
            except OverflowError:
                return math.copysign(math.inf, b) if e.exponent % 2 else math.inf
        return np.asarray(b, dtype=float) ** e.exponent
    a = _eval(e.left, bindings, params)
    b = _eval(e.right, bindings, params)
    if e.op == "add":
        return a + b
    if e.op == "sub":
        return a - b
    if e.op == "mul":
        return a * b
    if np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


# ---------------------------------------------------------------------------
# Taylor expansion in epsilon

_CORRECTION_VARS = ("y", "dy", "ddy")


@dataclass(frozen=True)
class EpsTaylorTerms:
    """Coefficients of N(y + eps*y_c, y' + eps*y_c', y'' + eps*y_c'', eps).

    ``terms`` maps ``(eps_power, (p_y, p_dy, p_ddy))`` to the coefficient of
    ``eps^eps_power * y_c^p_y * (y_c')^p_dy * (y_c'')^p_ddy``.  Every
    coefficient is evaluated at eps=0, so it is a function of the current
    iterate (``x, y, dy, ddy``) and parameters only.  Zero coefficients are
    omitted.
    """

    order: int
    terms: dict = field(default_factory=dict)

    def coefficient(self, eps_power: int, y_c: int = 0, dy_c: int = 0, ddy_c: int = 0) -> Expr:
        return self.terms.get((eps_power, (y_c, dy_c, ddy_c)), ZERO)

    def pure_terms(self):
        """Items not multiplying any correction factor, by eps power."""
        return {k: c for (k, m), c in self.terms.items() if m == (0, 0, 0)}

    def linear_terms(self):
        """Coefficient sums of y_c, y_c', y_c'' (eps set to 1)."""
        out = {}
        for (k, m), c in self.terms.items():
            if sum(m) == 1:
                name = _CORRECTION_VARS[m.index(1)]
                out[name] = add(out.get(name, ZERO), c)
        return out

    def nonlinear_terms(self):
        return {key: c for key, c in self.terms.items() if sum(key[1]) >= 2}


def _at_eps_zero(e: Expr) -> Expr:
    return simplify(substitute(e, {"eps": ZERO}))


def eps_taylor(n: Expr, order: int) -> EpsTaylorTerms:
    """Expand ``n`` to first or second order in the perturbation parameter.

    Order 1 collects ``N, N_v, N_eps`` (v in y, y', y''); order 2 adds
    ``N_eps v``, ``N_eps eps / 2`` and the quadratic correction terms
    ``N_vw``.
    """
    if order not in (1, 2):
        raise ValueError("Taylor order must be 1 or 2")
    n = simplify(n)
    terms = {}

    def put(key, e):
        e = _at_eps_zero(e)
        if not _is_const(e, 0.0):
            terms[key] = e

    put((0, (0, 0, 0)), n)
    n_eps = differentiate(n, "eps")
    put((1, (0, 0, 0)), n_eps)
    first = {v: differentiate(n, v) for v in _CORRECTION_VARS}
    for i, v in enumerate(_CORRECTION_VARS):
        put((1, _unit(i)), first[v])
    if order == 2:
        put((2, (0, 0, 0)), mul(Const(0.5), differentiate(n_eps, "eps")))
        for i, v in enumerate(_CORRECTION_VARS):
            put((2, _unit(i)), differentiate(n_eps, v))
        for i, j in combinations_with_replacement(range(3), 2):
            second = differentiate(first[_CORRECTION_VARS[i]], _CORRECTION_VARS[j])
            mono = [0, 0, 0]
            mono[i] += 1
            mono[j] += 1
            # 1/2 N_vv on squares; mixed partials appear twice in the sum
            put((2, tuple(mono)), mul(Const(0.5), second) if i == j else second)
    return EpsTaylorTerms(order=order, terms=terms)


def _unit(i: int) -> tuple:
    m = [0, 0, 0]
    m[i] = 1
    return tuple(m)
