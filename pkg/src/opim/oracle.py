"""Independent reference solutions.

Closed forms for the three bundled problems, the transcendental root behind
Bratu's exact solution, an RK4 integrator for initial value problems and a
finite-difference Newton solver for two-point boundary value problems.

Nothing here touches the iteration or constants machinery; problems are read
through their :class:`~opim.problem.ProblemSpec` and the nonlinearity is
evaluated with :func:`opim.expr.eval_at`, so agreement with the iteration is
real evidence rather than a tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import expr as ex
from .errors import (DomainError, IntegrationOverflowError, NoConvergenceError,
                     NoRealRootError, ProblemError, UnsupportedProblemError)
from .problem import ProblemSpec

__all__ = [
    "ExactSolution", "exact_eval", "exact_for", "solve_theta", "erratum_eval",
    "GridSolution", "rk4_ivp", "fd_newton_bvp", "THETA_TOL",
]

THETA_TOL = 1e-13
THETA_MAX = 50.0
OVERFLOW = 1e150


# -- Bratu's theta ------------------------------------------------------------

def _g(theta: float, lam: float) -> float:
    return theta - math.sqrt(2.0 * lam) * math.cosh(theta / 4.0)


def _theta_split(lam: float) -> float:
    """Maximiser of g: sinh(theta/4) = 4 / sqrt(2 lambda)."""
    return 4.0 * math.asinh(4.0 / math.sqrt(2.0 * lam))


def _bisect(lam: float, lo: float, hi: float) -> float:
    glo, ghi = _g(lo, lam), _g(hi, lam)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if np.sign(glo) == np.sign(ghi):
        raise NoRealRootError(f"no sign change of theta - sqrt(2 lambda) cosh(theta/4) on [{lo}, {hi}]")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        gm = _g(mid, lam)
        if abs(gm) <= THETA_TOL or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(mid)):
            return mid
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_theta(lam: float, branch: str = "lower") -> float:
    """Root of ``theta = sqrt(2 lambda) cosh(theta / 4)``.

    The two roots straddle the maximiser of the left-minus-right difference;
    ``lower`` returns the smaller one.  Raises :class:`NoRealRootError` past
    the turning point (lambda > ~3.5138).
    """
    if branch not in ("lower", "upper"):
        raise ValueError("branch must be 'lower' or 'upper'")
    if not lam > 0:
        raise NoRealRootError("theta equation needs lambda > 0")
    split = _theta_split(lam)
    if _g(split, lam) < 0:
        raise NoRealRootError(f"lambda = {lam} is beyond the turning point: no real solution")
    if branch == "lower":
        return _bisect(lam, 0.0, split)
    return _bisect(lam, split, max(THETA_MAX, 2 * split))


# -- closed forms -------------------------------------------------------------

@dataclass(frozen=True)
class ExactSolution:
    kind: str
    lam: float | None = None
    theta: float | None = None
    branch: str = "lower"

    def __post_init__(self):
        if self.kind not in ("example1", "bratu1", "bratu2"):
            raise ValueError(f"unknown exact solution {self.kind!r}")
        if self.kind == "bratu1":
            if self.lam is None:
                raise ValueError("bratu1 needs lambda")
            if self.theta is None:
                object.__setattr__(self, "theta", solve_theta(self.lam, self.branch))

    def __call__(self, x):
        return exact_eval(self, x)


def exact_for(problem: ProblemSpec, branch: str = "lower") -> ExactSolution | None:
    """Closed form named by the problem file, or None."""
    if problem.exact is None:
        return None
    lam = problem.parameters.get("lambda") if problem.exact == "bratu1" else None
    return ExactSolution(problem.exact, lam=lam, branch=branch)


def exact_eval(sol: ExactSolution, x):
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        if sol.kind == "example1":
            c = np.cos(x)
            if np.any(c <= 0):
                raise DomainError("-2 ln cos x is undefined where cos x <= 0")
            out = -2.0 * np.log(c)
        elif sol.kind == "bratu1":
            t = sol.theta
            out = -2.0 * np.log(np.cosh((x - 0.5) * t / 2.0) / math.cosh(t / 4.0))
        else:
            s = 1.0 + np.sin(np.pi * x)
            if np.any(s <= 0):
                raise DomainError("ln(1 + sin(pi x)) is undefined where sin(pi x) = -1")
            out = np.log(s)
    return float(out) if out.ndim == 0 else out


def erratum_eval(x):
    """The misprinted closed form ln(1 + sin(1 + pi x)); kept to show it fails y(0) = 0."""
    x = np.asarray(x, dtype=float)
    out = np.log(1.0 + np.sin(1.0 + np.pi * x))
    return float(out) if out.ndim == 0 else out


# -- numerical oracles --------------------------------------------------------

@dataclass(frozen=True)
class GridSolution:
    x: np.ndarray
    y: np.ndarray
    dy: np.ndarray | None = None

    def at(self, xq):
        """Linear interpolation; exact at grid nodes."""
        return np.interp(xq, self.x, self.y)


def _nonlinear(problem: ProblemSpec):
    n = problem.nonlinearity
    if ex.contains_var(n, ("ddy",)):
        raise UnsupportedProblemError("reference solvers need a nonlinearity free of y''")
    params = problem.parameters

    def N(x, y, dy):
        return ex.eval_at(n, {"x": x, "y": y, "dy": dy}, params)
    return N


def rk4_ivp(problem: ProblemSpec, step: float, x_end: float | None = None) -> GridSolution:
    """Classical RK4 on (y, y') from y(a), y'(a).

    The step is shrunk so that a whole number of steps lands on ``x_end``
    (default: the right end of the domain).
    """
    if problem.conditions.kind != "ivp":
        raise ProblemError("rk4_ivp needs initial conditions")
    if not step > 0:
        raise ValueError("step must be positive")
    a = problem.domain[0]
    b = problem.domain[1] if x_end is None else float(x_end)
    n = max(1, math.ceil((b - a) / step - 1e-9))
    h = (b - a) / n
    p2, p1, p0 = problem.linear_coeffs
    N = _nonlinear(problem)

    def f(x, u):
        y, dy = u
        return np.array([dy, -(p1 * dy + p0 * y + N(x, y, dy)) / p2])

    xs = a + h * np.arange(n + 1)
    xs[-1] = b
    u = np.array([problem.conditions.first, problem.conditions.second], dtype=float)
    ys, dys = np.empty(n + 1), np.empty(n + 1)
    ys[0], dys[0] = u
    with np.errstate(all="ignore"):
        for i in range(n):
            x = xs[i]
            k1 = f(x, u)
            k2 = f(x + h / 2, u + h / 2 * k1)
            k3 = f(x + h / 2, u + h / 2 * k2)
            k4 = f(x + h, u + h * k3)
            u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > OVERFLOW:
                raise IntegrationOverflowError(f"solution blew up after x = {x:.6g}", last_x=float(x))
            ys[i + 1], dys[i + 1] = u
    return GridSolution(xs, ys, dys)


def fd_newton_bvp(problem: ProblemSpec, nodes: int, max_iter: int = 50, tol: float = 1e-12) -> GridSolution:
    """Second-order central differences with Newton; starts from zero (lower branch)."""
    if problem.conditions.kind != "bvp":
        raise ProblemError("fd_newton_bvp needs boundary conditions")
    if nodes < 5:
        raise ValueError("need at least 5 nodes")
    a, b = problem.domain
    x = np.linspace(a, b, nodes)
    h = (b - a) / (nodes - 1)
    alpha, gamma = problem.conditions.first, problem.conditions.second
    p2, p1, p0 = problem.linear_coeffs
    N = _nonlinear(problem)
    params = problem.parameters
    Ny = ex.differentiate(problem.nonlinearity, "y")
    Ndy = ex.differentiate(problem.nonlinearity, "dy")

    y = np.zeros(nodes)
    y[0], y[-1] = alpha, gamma
    xi = x[1:-1]
    for _ in range(max_iter):
        with np.errstate(all="ignore"):
            yi = y[1:-1]
            d1 = (y[2:] - y[:-2]) / (2 * h)
            d2 = (y[2:] - 2 * yi + y[:-2]) / h**2
            b_ = {"x": xi, "y": yi, "dy": d1}
            F = p2 * d2 + p1 * d1 + p0 * yi + N(xi, yi, d1)
            ny = np.broadcast_to(ex.eval_at(Ny, b_, params), yi.shape)
            ndy = np.broadcast_to(ex.eval_at(Ndy, b_, params), yi.shape)
        if not np.all(np.isfinite(F)):
            raise NoConvergenceError("finite-difference Newton diverged (non-finite residual)")
        ab = np.zeros((3, len(yi)))
        ab[0, 1:] = (p2 / h**2 + (p1 + ndy[:-1]) / (2 * h))   # super-diagonal
        ab[1] = -2 * p2 / h**2 + p0 + ny
        ab[2, :-1] = (p2 / h**2 - (p1 + ndy[1:]) / (2 * h))  # sub-diagonal
        delta = solve_banded((1, 1), ab, -F)
        if not np.all(np.isfinite(delta)):
            raise NoConvergenceError("finite-difference Newton diverged (singular Jacobian)")
        y[1:-1] += delta
        if np.max(np.abs(delta)) <= tol:
            return GridSolution(x, y)
    raise NoConvergenceError(f"finite-difference Newton did not converge in {max_iter} iterations")
