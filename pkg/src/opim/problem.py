"""Problem and method definitions, plus the key=value problem file format.

A problem file looks like::

    # y'' - 2 e^y = 0, y(0) = y'(0) = 0
    linear = "ddy"
    nonlinear = "-2*exp(y)"
    domain = 0 1
    conditions = ivp 0 0
    exact = example1

``conditions`` is ``ivp ALPHA BETA`` (y(a), y'(a)) or ``bvp ALPHA GAMMA``
(y(a), y(b)).  ``param NAME = VALUE`` lines bind parameters and ``exact``
optionally names a closed-form solution known to :mod:`opim.oracle`
(``example1``, ``bratu1``, ``bratu2``).  Blank lines and ``#`` comments are
ignored.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

from . import expr as ex
from .errors import ExprError, ProblemError
from .series import DEFAULT_DEGREE

__all__ = [
    "Conditions", "ProblemSpec", "MethodConfig", "METHODS",
    "parse_problem", "load_problem", "load_builtin", "BUILTIN_PROBLEMS",
]

BUILTIN_PROBLEMS = ("example1", "example2", "example3")
EXACT_KINDS = ("example1", "bratu1", "bratu2")


@dataclass(frozen=True)
class Conditions:
    """Two side conditions: ``ivp`` -> y(a), y'(a); ``bvp`` -> y(a), y(b)."""

    kind: str
    first: float
    second: float

    def __post_init__(self):
        if self.kind not in ("ivp", "bvp"):
            raise ProblemError(f"conditions must be 'ivp' or 'bvp', not {self.kind!r}")

    @property
    def homogeneous(self) -> bool:
        return self.first == 0.0 and self.second == 0.0


@dataclass(frozen=True)
class ProblemSpec:
    """``p2 y'' + p1 y' + p0 y + N(y'', y', y, x) = 0`` on ``[a, b]``."""

    linear_coeffs: tuple[float, float, float]
    nonlinearity: ex.Expr
    conditions: Conditions
    domain: tuple[float, float] = (0.0, 1.0)
    parameters: dict = field(default_factory=dict)
    name: str = "problem"
    exact: str | None = None

    def __post_init__(self):
        p2 = self.linear_coeffs[0]
        if p2 == 0:
            raise ProblemError("the coefficient of y'' in the linear part must be nonzero")
        a, b = self.domain
        if not a < b:
            raise ProblemError("domain must satisfy a < b")
        if self.exact is not None and self.exact not in EXACT_KINDS:
            raise ProblemError(f"unknown exact solution {self.exact!r}")
        missing = {s for s in ex.free_symbols(self.nonlinearity)
                   if s in ex.PARAMETERS and s not in self.parameters}
        if missing:
            raise ProblemError(f"unbound parameters: {', '.join(sorted(missing))}")

    @cached_property
    def perturbed(self) -> ex.Expr:
        """Nonlinearity with the artificial parameter inserted."""
        return ex.insert_epsilon(self.nonlinearity)

    def with_parameters(self, **values) -> "ProblemSpec":
        params = dict(self.parameters)
        params.update(values)
        return replace(self, parameters=params)

    def linear_text(self) -> str:
        parts = []
        for coeff, name in zip(self.linear_coeffs, ("ddy", "dy", "y")):
            if coeff:
                parts.append(name if coeff == 1 else f"{ex.to_text(ex.Const(coeff))}*{name}")
        return " + ".join(parts)


@dataclass(frozen=True)
class MethodConfig:
    """``taylor_order`` is the m of PIA(1, m); ``iterations`` the number of corrections."""

    taylor_order: int = 1
    optimal: bool = True
    iterations: int = 3
    degree_cap: int = DEFAULT_DEGREE

    def __post_init__(self):
        if self.taylor_order not in (1, 2):
            raise ProblemError("taylor order must be 1 or 2")
        if self.iterations < 1:
            raise ProblemError("iterations must be at least 1")

    @classmethod
    def from_name(cls, method: str, iterations: int, degree_cap: int = DEFAULT_DEGREE) -> "MethodConfig":
        try:
            order, optimal = METHODS[method]
        except KeyError:
            raise ProblemError(f"unknown method {method!r}; choose from {', '.join(METHODS)}") from None
        return cls(order, optimal, iterations, degree_cap)

    @property
    def name(self) -> str:
        return f"{'o' if self.optimal else ''}pia1{self.taylor_order}"


METHODS = {"pia11": (1, False), "pia12": (2, False), "opia11": (1, True), "opia12": (2, True)}


def _linear_coeffs(text: str, params: dict) -> tuple[float, float, float]:
    e = ex.parse(text)
    bad = ex.free_symbols(e) - {"y", "dy", "ddy"} - set(params) - set(ex.BUILTIN_CONSTANTS)
    if bad:
        raise ProblemError(f"linear part may only involve y, dy, ddy and parameters (found {', '.join(sorted(bad))})")
    coeffs = []
    for v in ("ddy", "dy", "y"):
        d = ex.differentiate(e, v)
        if not ex.is_constant(d):
            raise ProblemError(f"linear part {text!r} is not linear in {v}")
        coeffs.append(float(ex.eval_at(d, {}, params)))
    if ex.eval_at(e, {"y": 0.0, "dy": 0.0, "ddy": 0.0}, params) != 0.0:
        raise ProblemError("linear part must not contain a constant term")
    return tuple(coeffs)


def parse_problem(text: str, name: str = "problem") -> ProblemSpec:
    """Parse problem-file text into a :class:`ProblemSpec`."""
    entries = {}
    params = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ProblemError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            value = " ".join(shlex.split(value))
        except ValueError as err:
            raise ProblemError(f"line {lineno}: {err}") from None
        if key.startswith("param "):
            pname = key.split(None, 1)[1].strip()
            if pname not in ex.PARAMETERS:
                raise ProblemError(f"line {lineno}: unknown parameter {pname!r}")
            try:
                params[pname] = float(value)
            except ValueError:
                raise ProblemError(f"line {lineno}: parameter value must be a real number") from None
        elif key in ("linear", "nonlinear", "domain", "conditions", "exact", "name"):
            entries[key] = value
        else:
            raise ProblemError(f"line {lineno}: unknown key {key!r}")
    for required in ("linear", "nonlinear", "conditions"):
        if required not in entries:
            raise ProblemError(f"missing required key {required!r}")
    try:
        linear = _linear_coeffs(entries["linear"], params)
        nonlinear = ex.parse(entries["nonlinear"])
    except ExprError as err:
        raise ProblemError(str(err)) from err
    try:
        domain = tuple(float(v) for v in entries.get("domain", "0 1").split())
        ckind, *cvals = entries["conditions"].split()
        cvals = [float(v) for v in cvals]
    except ValueError:
        raise ProblemError("domain and condition values must be real numbers") from None
    if len(domain) != 2:
        raise ProblemError("domain needs exactly two numbers")
    if len(cvals) != 2:
        raise ProblemError("exactly two condition values are required")
    return ProblemSpec(
        linear_coeffs=linear,
        nonlinearity=nonlinear,
        conditions=Conditions(ckind, cvals[0], cvals[1]),
        domain=domain,
        parameters=params,
        name=entries.get("name", name),
        exact=entries.get("exact"),
    )


def load_problem(path) -> ProblemSpec:
    path = Path(path)
    return parse_problem(path.read_text(), name=path.stem)


def load_builtin(name: str) -> ProblemSpec:
    """One of the three bundled Bratu-family problems."""
    if name not in BUILTIN_PROBLEMS:
        raise ProblemError(f"unknown built-in problem {name!r}")
    text = resources.files("opim").joinpath("problems", f"{name}.prob").read_text()
    return parse_problem(text, name=name)
