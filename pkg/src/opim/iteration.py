"""The perturbation iteration engine.

Each step linearises only the nonlinear part of the equation around the
current iterate, solves the resulting constant-coefficient correction ODE
as a truncated series and updates

    y_{k+1} = y_k + (C_0 + ... + C_k) * (y_c)_k.

With ``optimal=False`` every multiplier is 1, which is the plain
perturbation iteration algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import expr as ex
from .errors import ResonanceError, UnsupportedProblemError
from .problem import MethodConfig, ProblemSpec
from .series import TruncatedSeries

__all__ = [
    "LinearCorrectionODE", "IterationState", "taylor_terms", "series_of",
    "trivial_start", "build_correction", "solve_correction", "run_iterations",
    "multipliers", "describe_correction",
]

RESONANCE_TOL = 1e-12


@dataclass(frozen=True)
class LinearCorrectionODE:
    """``(y_c)'' + q1 (y_c)' + q0 (y_c) = rhs``."""

    q1: float
    q0: float
    rhs: TruncatedSeries


@dataclass(frozen=True)
class IterationState:
    iterate: TruncatedSeries
    consumed_constants: tuple
    history: tuple = ()
    corrections: tuple = ()

    @property
    def iterates(self) -> tuple:
        """y_0, ..., y_m."""
        return self.history + (self.iterate,)


@lru_cache(maxsize=64)
def taylor_terms(perturbed: ex.Expr, order: int) -> ex.EpsTaylorTerms:
    return ex.eps_taylor(perturbed, order)


def series_of(e: ex.Expr, values: dict, params: dict, template: TruncatedSeries):
    """Evaluate a polynomial expression on series.

    ``values`` maps variable names to series.  Functions are only allowed
    on subexpressions that do not involve any variable.
    """
    if ex.is_constant(e):
        return template.like([float(ex.eval_at(e, {}, params))])
    if isinstance(e, ex.Var):
        try:
            return values[e.name]
        except KeyError:
            raise UnsupportedProblemError(f"variable {e.name!r} cannot appear in a correction coefficient") from None
    if isinstance(e, ex.Unary):
        if e.func == "neg":
            return -series_of(e.arg, values, params, template)
        raise UnsupportedProblemError(
            f"coefficient {ex.to_text(e)!r} is not polynomial in the iterate")
    if isinstance(e, ex.Pow):
        if e.exponent < 0:
            raise UnsupportedProblemError(f"negative power of the iterate in {ex.to_text(e)!r}")
        return series_of(e.base, values, params, template) ** e.exponent
    if e.op == "div":
        if not ex.is_constant(e.right):
            raise UnsupportedProblemError(f"division by the iterate in {ex.to_text(e)!r}")
        return series_of(e.left, values, params, template) / float(ex.eval_at(e.right, {}, params))
    left = series_of(e.left, values, params, template)
    right = series_of(e.right, values, params, template)
    if e.op == "add":
        return left + right
    if e.op == "sub":
        return left - right
    return left * right


def trivial_start(problem: ProblemSpec, degree_cap: int) -> TruncatedSeries:
    """Zero for homogeneous conditions, otherwise the affine function meeting them."""
    a, b = problem.domain
    zero = TruncatedSeries.zeros(degree_cap, problem.domain)
    cond = problem.conditions
    if cond.homogeneous:
        return zero
    if cond.kind == "ivp":
        slope = cond.second
        intercept = cond.first - slope * a
    else:
        slope = (cond.second - cond.first) / (b - a)
        intercept = cond.first - slope * a
    return zero.like([intercept, slope])


def _left_coefficients(problem: ProblemSpec, terms: ex.EpsTaylorTerms):
    """Symbolic coefficients of (y_c)'', (y_c)', (y_c) on the left side."""
    if terms.nonlinear_terms():
        raise UnsupportedProblemError("correction equation is nonlinear in the correction term")
    lin = terms.linear_terms()
    p2, p1, p0 = problem.linear_coeffs
    coeffs = {
        "ddy": ex.add(ex.Const(p2), lin.get("ddy", ex.ZERO)),
        "dy": ex.add(ex.Const(p1), lin.get("dy", ex.ZERO)),
        "y": ex.add(ex.Const(p0), lin.get("y", ex.ZERO)),
    }
    for name, c in coeffs.items():
        if not ex.is_constant(c):
            raise UnsupportedProblemError(
                f"coefficient of the correction ({name}) depends on the solution: {ex.to_text(c)}")
    return coeffs


def build_correction(problem: ProblemSpec, cfg: MethodConfig, y_n: TruncatedSeries) -> LinearCorrectionODE:
    """Linear correction equation at the iterate ``y_n`` (eps set to 1)."""
    terms = taylor_terms(problem.perturbed, cfg.taylor_order)
    left = _left_coefficients(problem, terms)
    params = problem.parameters
    c2, c1, c0 = (float(ex.eval_at(left[k], {}, params)) for k in ("ddy", "dy", "y"))
    if c2 == 0.0:
        raise UnsupportedProblemError("correction equation lost its second derivative")
    dy = y_n.derivative()
    ddy = dy.derivative()
    values = {"x": y_n.like([0.0, 1.0]), "y": y_n, "dy": dy, "ddy": ddy}
    p2, p1, p0 = problem.linear_coeffs
    forcing = ddy * p2 + dy * p1 + y_n * p0
    for e in terms.pure_terms().values():
        forcing = forcing + series_of(e, values, params, y_n)
    return LinearCorrectionODE(q1=c1 / c2, q0=c0 / c2, rhs=-forcing / c2)


def _recurrence(r: np.ndarray, q1: float, q0: float, seed0: float, seed1: float) -> np.ndarray:
    n = len(r)
    a = np.zeros(n)
    a[0] = seed0
    if n > 1:
        a[1] = seed1
    for k in range(n - 2):
        a[k + 2] = (r[k] - q1 * (k + 1) * a[k + 1] - q0 * a[k]) / ((k + 2) * (k + 1))
    return a


def solve_correction(ode: LinearCorrectionODE, problem: ProblemSpec) -> TruncatedSeries:
    """Series solution vanishing at both condition functionals.

    Raises
    ------
    ResonanceError
        if the homogeneous equation admits a nonzero solution satisfying the
        homogeneous conditions (singular 2x2 system).
    """
    rhs = ode.rhs
    r = rhs.coefficients
    zeros = np.zeros_like(r)
    particular = rhs.like(_recurrence(r, ode.q1, ode.q0, 0.0, 0.0))
    h1 = rhs.like(_recurrence(zeros, ode.q1, ode.q0, 1.0, 0.0))
    h2 = rhs.like(_recurrence(zeros, ode.q1, ode.q0, 0.0, 1.0))
    a, b = problem.domain
    if problem.conditions.kind == "ivp":
        functionals = (lambda s: s.eval(a), lambda s: s.derivative().eval(a))
    else:
        functionals = (lambda s: s.eval(a), lambda s: s.eval(b))
    m = np.array([[f(h1), f(h2)] for f in functionals])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < RESONANCE_TOL:
        raise ResonanceError(f"correction equation is resonant (condition determinant {det:.3e})")
    target = -np.array([f(particular) for f in functionals])
    w = np.linalg.solve(m, target)
    return particular + h1 * w[0] + h2 * w[1]


def multipliers(cfg: MethodConfig, constants=None) -> np.ndarray:
    """S_k(1) = C_0 + ... + C_k for each iteration k."""
    if not cfg.optimal:
        return np.ones(cfg.iterations)
    if constants is None or len(constants) != cfg.iterations:
        raise ValueError(f"expected {cfg.iterations} convergence-control constants")
    return np.cumsum(np.asarray(constants, dtype=float))


def run_iterations(problem: ProblemSpec, cfg: MethodConfig, constants=None) -> IterationState:
    """Apply ``cfg.iterations`` corrections starting from the trivial solution.

    ``constants`` is ignored when ``cfg.optimal`` is false.
    """
    scales = multipliers(cfg, constants)
    y = trivial_start(problem, cfg.degree_cap)
    history, corrections = [], []
    for s in scales:
        y_c = solve_correction(build_correction(problem, cfg, y), problem)
        history.append(y)
        corrections.append(y_c)
        y = y + y_c * s
    used = tuple(float(c) for c in constants) if cfg.optimal else (1.0,) + (0.0,) * (cfg.iterations - 1)
    return IterationState(iterate=y, consumed_constants=used, history=tuple(history),
                          corrections=tuple(corrections))


# ---------------------------------------------------------------------------
# rendering of correction equations

_ORDER = {"lambda": 0, "pi": 1, "x": 2, "y": 3, "dy": 4, "ddy": 5}
_UNICODE = {"lambda": "λ", "pi": "π", "y": "y", "dy": "y'", "ddy": "y''", "x": "x"}
_ASCII = {"lambda": "lambda", "pi": "pi", "y": "y", "dy": "y'", "ddy": "y''", "x": "x"}
_SUPERSCRIPT = str.maketrans("-0123456789", "⁻⁰¹²³⁴⁵⁶⁷⁸⁹")


def _poly_mul(p, q):
    out = {}
    for k1, c1 in p.items():
        for k2, c2 in q.items():
            powers = dict(k1)
            for atom, n in k2:
                powers[atom] = powers.get(atom, 0) + n
            key = tuple(sorted(((a, n) for a, n in powers.items() if n),
                               key=lambda t: (_ORDER.get(t[0], 9), t[0])))
            out[key] = out.get(key, 0.0) + c1 * c2
    return {k: c for k, c in out.items() if c != 0.0}


def _poly_add(p, q, sign=1.0):
    out = dict(p)
    for k, c in q.items():
        out[k] = out.get(k, 0.0) + sign * c
    return {k: c for k, c in out.items() if c != 0.0}


def _opaque(e):
    return {((f"({ex.to_text(e)})", 1),): 1.0}


def _poly(e: ex.Expr) -> dict:
    """Sum-of-monomials form; non-polynomial pieces become opaque atoms."""
    if isinstance(e, ex.Const):
        return {(): e.value} if e.value else {}
    if isinstance(e, (ex.Param, ex.Var)):
        return {((e.name, 1),): 1.0}
    if isinstance(e, ex.Unary):
        if e.func == "neg":
            return {k: -c for k, c in _poly(e.arg).items()}
        return _opaque(e)
    if isinstance(e, ex.Pow):
        base = _poly(e.base)
        if e.exponent >= 0:
            out = {(): 1.0}
            for _ in range(e.exponent):
                out = _poly_mul(out, base)
            return out
        if len(base) == 1:
            (key, c), = base.items()
            n = -e.exponent
            return {tuple((a, -p * n) for a, p in key): c ** -n}
        return _opaque(e)
    left, right = _poly(e.left), _poly(e.right)
    if e.op == "add":
        return _poly_add(left, right)
    if e.op == "sub":
        return _poly_add(left, right, -1.0)
    if e.op == "mul":
        return _poly_mul(left, right)
    if len(right) == 1:
        (key, c), = right.items()
        return _poly_mul(left, {tuple((a, -p) for a, p in key): 1.0 / c})
    return _opaque(e)


def _atom_text(atom, n, names, unicode):
    base = names.get(atom, atom)
    if n == 1:
        return base
    return base + (str(n).translate(_SUPERSCRIPT) if unicode else f"^{n}")


def _monomial_text(key, coeff, names, unicode):
    """Magnitude text of ``coeff * key``; the sign is handled by the caller."""
    mag = abs(coeff)
    symbolic = [(a, n) for a, n in key if a in ("lambda", "pi")]
    rest = [(a, n) for a, n in key if a not in ("lambda", "pi")]
    sym_text = " ".join(_atom_text(a, n, names, unicode) for a, n in symbolic)
    rest_text = " ".join(_atom_text(a, n, names, unicode) for a, n in rest)
    frac = Fraction(mag).limit_denominator(12)
    is_rational = abs(float(frac) - mag) <= 1e-12 * max(1.0, mag)
    if is_rational and frac.denominator > 1:
        num = "" if frac.numerator == 1 and sym_text else str(frac.numerator)
        inner = " ".join(t for t in (num, sym_text) if t)
        head = f"({inner}/{frac.denominator})"
    else:
        number = ""
        if not (mag == 1.0 and key):
            number = str(int(mag)) if is_rational else format(mag, ".15g")
        head = " ".join(t for t in (number, sym_text) if t)
    return " ".join(t for t in (head, rest_text) if t)


def _degree(key):
    return sum(n for a, n in key if a not in ("lambda", "pi"))


def _terms(poly, sign, names, unicode):
    """Ordered (negative?, text) pairs for ``sign * poly``."""
    items = sorted(poly.items(), key=lambda kv: (-_degree(kv[0]), [(_ORDER.get(a, 9), a, n) for a, n in kv[0]]))
    return [(sign * c < 0, _monomial_text(k, c, names, unicode)) for k, c in items]


def _join(terms):
    out = ""
    for negative, text in terms:
        if not out:
            out = f"-{text}" if negative else text
        else:
            out += f" - {text}" if negative else f" + {text}"
    return out


def _coefficient_prefix(poly, names, unicode, first):
    """Signed coefficient in front of a correction factor."""
    if len(poly) == 1:
        (key, c), = poly.items()
        text = _monomial_text(key, c, names, unicode) if not (abs(c) == 1.0 and not key) else ""
        sign = "-" if c < 0 else "+"
    else:
        text = f"({_join(_terms(poly, 1.0, names, unicode))})"
        sign = "+"
    text = f"{text} " if text else ""
    if first:
        return ("-" if sign == "-" else "") + text
    return f" {sign} {text}"


def describe_correction(problem: ProblemSpec, cfg: MethodConfig, unicode: bool = True) -> str:
    """Human-readable correction equation at a generic iterate ``y``.

    Parameters stay symbolic.  When the zeroth-order forcing is entirely
    negative it is distributed over the right side, otherwise it is shown
    grouped with the linear operator as ``- (L y + N)``.
    """
    terms = taylor_terms(problem.perturbed, cfg.taylor_order)
    left = _left_coefficients(problem, terms)
    names = _UNICODE if unicode else _ASCII

    lhs = ""
    for name, label in (("ddy", "(y_c)''"), ("dy", "(y_c)'"), ("y", "(y_c)")):
        poly = _poly(ex.simplify(left[name]))
        if poly:
            lhs += _coefficient_prefix(poly, names, unicode, first=not lhs) + label

    p2, p1, p0 = problem.linear_coeffs
    linear = {k: c for k, c in ((((("ddy", 1),)), p2), ((("dy", 1),), p1), ((("y", 1),), p0)) if c}
    pure = terms.pure_terms()
    n0 = _poly(pure.get(0, ex.ZERO))
    higher = [_poly(pure[k]) for k in sorted(pure) if k > 0]

    distribute = not n0 or all(c < 0 for c in n0.values())
    rhs_terms = []
    if distribute:
        rhs_terms += _terms(linear, -1.0, names, unicode)
    for p in higher:
        rhs_terms += _terms(p, -1.0, names, unicode)
    if distribute:
        rhs_terms += _terms(n0, -1.0, names, unicode)
        rhs = _join(rhs_terms)
    else:
        group = _join(_terms(linear, 1.0, names, unicode) + _terms(n0, 1.0, names, unicode))
        rhs = _join(rhs_terms + [(True, f"({group})")])
    return f"{lhs} = {rhs or '0'}"
