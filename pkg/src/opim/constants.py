"""Determination of the convergence-control constants.

The residual ``R(x; C) = L(y_m) + N(y_m)`` of the final iterate is driven to
zero at collocation points by damped Newton iteration, or its integrated
square is minimised (Levenberg-Marquardt on the quadrature residuals).  Both run
from a fixed grid of starting points; among the converged candidates the one
with the smallest integrated squared residual wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import expr as ex
from .errors import NoConvergenceError, OpimError
from .iteration import run_iterations
from .problem import MethodConfig, ProblemSpec

__all__ = [
    "default_points", "residual_at", "residual_from_values", "ResidualSystem", "SolveReport",
    "solve_collocation", "solve_least_squares", "solve_constants",
    "START_GRID", "REPRODUCTION_POINTS",
]

log = logging.getLogger(__name__)

START_GRID = (-1.5, -1.0, -0.5, 0.5, 1.0, 1.5)
START_TAIL = 0.05
REPRODUCTION_POINTS = (0.3, 0.6, 0.9)
COLLOCATION_TOL = 1e-9
GRADIENT_TOL = 1e-8
ZERO_RESIDUAL_TOL = 1e-12
MAX_NEWTON = 100
MAX_HALVINGS = 40


def default_points(a: float, b: float, m: int) -> tuple:
    """``m`` uniformly spaced interior points of ``(a, b)``."""
    if m < 1:
        raise ValueError("need at least one collocation point")
    return tuple(a + i * (b - a) / (m + 1) for i in range(1, m + 1))


def residual_at(problem: ProblemSpec, cfg: MethodConfig, C, x):
    """Residual of the m-th iterate built with constants ``C`` (scalar or array ``x``)."""
    y = run_iterations(problem, cfg, C).iterate
    return _residual_of(problem, y, x)


def _residual_of(problem, y, x):
    dy = y.derivative()
    ddy = dy.derivative()
    return residual_from_values(problem, x, y.eval(x), dy.eval(x), ddy.eval(x))


def residual_from_values(problem: ProblemSpec, x, y, dy, ddy):
    """``L(y) + N(y, eps=1)`` from sampled values of a candidate and its derivatives."""
    p2, p1, p0 = problem.linear_coeffs
    bindings = {"x": np.asarray(x, dtype=float) if np.ndim(x) else float(x),
                "y": y, "dy": dy, "ddy": ddy, "eps": 1.0}
    return p2 * ddy + p1 * dy + p0 * y + ex.eval_at(problem.perturbed, bindings, problem.parameters)


def _simpson_weights(a: float, b: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    if panels < 2 or panels % 2:
        raise ValueError("Simpson's rule needs an even number of panels >= 2")
    nodes = np.linspace(a, b, panels + 1)
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return nodes, w * (b - a) / (3.0 * panels)


@dataclass(frozen=True)
class SolveReport:
    constants: tuple
    residual_inf_norm: float
    newton_iterations: int
    starts_tried: int
    mode: str
    integrated_residual: float = float("nan")
    residual_history: tuple = ()
    candidates: tuple = ()  # (constants, integrated residual) of every converged start


@dataclass
class ResidualSystem:
    """Map from a constants vector to residual samples."""

    problem: ProblemSpec
    cfg: MethodConfig
    collocation_points: Sequence[float] | None = None
    quadrature_panels: int = 200

    def __post_init__(self):
        a, b = self.problem.domain
        if self.collocation_points is None:
            self.collocation_points = default_points(a, b, self.cfg.iterations)
        pts = np.asarray(self.collocation_points, dtype=float)
        if len(pts) != self.cfg.iterations:
            raise ValueError(f"{self.cfg.iterations} unknowns need {self.cfg.iterations} collocation points, got {len(pts)}")
        if np.any(pts <= a) or np.any(pts >= b) or np.any(np.diff(pts) <= 0):
            raise ValueError("collocation points must be strictly increasing and interior")
        self.collocation_points = tuple(float(p) for p in pts)
        self._nodes, self._weights = _simpson_weights(a, b, self.quadrature_panels)

    def residual(self, C, x):
        return residual_at(self.problem, self.cfg, C, x)

    def at_points(self, C) -> np.ndarray:
        return np.asarray(self.residual(C, np.array(self.collocation_points)), dtype=float)

    def at_nodes(self, C) -> np.ndarray:
        return np.asarray(self.residual(C, self._nodes), dtype=float)

    def integrated_square(self, C) -> float:
        """Composite Simpson approximation of the integral of R^2 over [a, b]."""
        r = self.at_nodes(C)
        return float(self._weights @ (r * r))

    @property
    def weights(self) -> np.ndarray:
        return self._weights


def _safe(F: Callable, c):
    try:
        with np.errstate(all="ignore"):
            f = np.asarray(F(c), dtype=float)
    except (OpimError, ArithmeticError):
        return None
    return f if np.all(np.isfinite(f)) else None


def _jacobian(F: Callable, c: np.ndarray, f0: np.ndarray) -> np.ndarray | None:
    """Forward differences with steps 1e-7 * max(1, |c_j|)."""
    jac = np.empty((len(f0), len(c)))
    for j in range(len(c)):
        cj = c.copy()
        cj[j] += 1e-7 * max(1.0, abs(c[j]))
        h = cj[j] - c[j]  # the step actually represented
        fj = _safe(F, cj)
        if fj is None:
            return None
        jac[:, j] = (fj - f0) / h
    return jac


def _central_jacobian(F: Callable, c: np.ndarray, m_out: int) -> np.ndarray | None:
    """Central differences; the gradient test needs more than forward accuracy."""
    jac = np.empty((m_out, len(c)))
    for j in range(len(c)):
        h = 1e-6 * max(1.0, abs(c[j]))
        cp, cm = c.copy(), c.copy()
        cp[j] += h
        cm[j] -= h
        fp, fm = _safe(F, cp), _safe(F, cm)
        if fp is None or fm is None:
            return None
        jac[:, j] = (fp - fm) / (cp[j] - cm[j])
    return jac


def _linear_step(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        step = np.linalg.solve(A, rhs)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    return np.linalg.lstsq(A, rhs, rcond=None)[0]


@dataclass
class _Trial:
    constants: np.ndarray
    converged: bool
    iterations: int
    history: list = field(default_factory=list)


def _newton(F: Callable, c0, tol: float = COLLOCATION_TOL) -> _Trial:
    """Damped Newton on ``F(c) = 0``; steps are halved until the 2-norm decreases."""
    c = np.array(c0, dtype=float)
    f = _safe(F, c)
    if f is None:
        return _Trial(c, False, 0)
    norm = float(np.linalg.norm(f))
    history = [norm]
    for it in range(MAX_NEWTON):
        if np.max(np.abs(f)) <= tol:
            return _Trial(c, True, it, history)
        jac = _jacobian(F, c, f)
        if jac is None:
            break
        step = _linear_step(jac, -f)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            trial = c + t * step
            f_new = _safe(F, trial)
            if f_new is not None and np.linalg.norm(f_new) < norm:
                break
            t *= 0.5
        else:
            break
        c, f = trial, f_new
        norm = float(np.linalg.norm(f))
        history.append(norm)
    return _Trial(c, bool(np.max(np.abs(f)) <= tol), len(history) - 1, history)


def _least_squares_trial(sys: ResidualSystem, c0, tol: float = GRADIENT_TOL) -> _Trial:
    """Minimise sum(w * R^2) at the quadrature nodes (Levenberg-Marquardt).

    Converged when ||grad||_inf <= tol, or when the minimiser reports that
    the objective / step stalled at machine precision: the constants are not
    always isolated (several combinations give the same iterate), so the
    gradient can plateau slightly above ``tol`` in a flat valley.
    """
    sw = np.sqrt(sys.weights)
    penalty = np.full(len(sw), 1e3)
    history = []

    def fun(c):
        r = _safe(sys.at_nodes, c)
        out = penalty if r is None else sw * r
        with np.errstate(over="ignore"):
            history.append(float(out @ out))
        return out

    c = np.array(c0, dtype=float)
    if _safe(sys.at_nodes, c) is None:
        return _Trial(c, False, 0)
    res = optimize.least_squares(fun, c, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                 max_nfev=400 * len(c))
    c = res.x
    r = _safe(sys.at_nodes, c)
    if r is None:
        return _Trial(c, False, res.nfev, history)
    jac = _central_jacobian(sys.at_nodes, c, len(r))
    grad_ok = jac is not None and np.max(np.abs(2.0 * jac.T @ (sys.weights * r))) <= tol
    stalled = res.status in (2, 3, 4)
    return _Trial(c, bool(grad_ok or stalled), res.nfev, history)


def _starts(m: int):
    for c0 in START_GRID:
        yield np.array([c0] + [START_TAIL] * (m - 1))


def _plain_guess(m: int) -> np.ndarray:
    return np.array([1.0] + [0.0] * (m - 1))


def solve_collocation(sys: ResidualSystem) -> SolveReport:
    """Solve R(x_i; C) = 0 at the collocation points.

    Raises
    ------
    NoConvergenceError
        when no start reaches max |R(x_i)| <= 1e-9.
    """
    m = sys.cfg.iterations
    guess = _plain_guess(m)
    r0 = _safe(sys.at_points, guess)
    if r0 is not None and np.max(np.abs(r0)) <= ZERO_RESIDUAL_TOL:
        return SolveReport(tuple(guess), float(np.max(np.abs(r0))), 0, 0, "collocation",
                           sys.integrated_square(guess), (float(np.linalg.norm(r0)),))
    trials, tried = [], 0
    best_res = np.inf
    for start in _starts(m):
        tried += 1
        trial = _newton(sys.at_points, start)
        r = _safe(sys.at_points, trial.constants)
        if r is not None:
            best_res = min(best_res, float(np.max(np.abs(r))))
        log.debug("start %s -> %s converged=%s", start, trial.constants, trial.converged)
        if trial.converged:
            trials.append((trial, sys.integrated_square(trial.constants)))
    if not trials:
        raise NoConvergenceError(
            f"collocation failed from all {tried} starts (best max|R| = {best_res:.3e})",
            starts_tried=tried, best_residual=best_res)
    best, integral = min(trials, key=lambda t: t[1])
    r = sys.at_points(best.constants)
    return SolveReport(
        constants=tuple(float(v) for v in best.constants),
        residual_inf_norm=float(np.max(np.abs(r))),
        newton_iterations=best.iterations,
        starts_tried=tried,
        mode="collocation",
        integrated_residual=integral,
        residual_history=tuple(best.history),
        candidates=tuple((tuple(float(v) for v in t.constants), j) for t, j in trials),
    )


def solve_least_squares(sys: ResidualSystem) -> SolveReport:
    """Minimise the integrated squared residual over [a, b]."""
    m = sys.cfg.iterations
    guess = _plain_guess(m)
    r0 = _safe(sys.at_nodes, guess)
    if r0 is not None and np.max(np.abs(r0)) <= ZERO_RESIDUAL_TOL:
        return SolveReport(tuple(guess), float(np.max(np.abs(r0))), 0, 0, "least_squares",
                           float(sys.weights @ (r0 * r0)), ())
    trials, tried = [], 0
    for start in _starts(m):
        tried += 1
        trial = _least_squares_trial(sys, start)
        if trial.converged:
            trials.append((trial, sys.integrated_square(trial.constants)))
    if not trials:
        raise NoConvergenceError(f"least-squares minimisation failed from all {tried} starts",
                                 starts_tried=tried)
    best, integral = min(trials, key=lambda t: t[1])
    r = sys.at_nodes(best.constants)
    return SolveReport(
        constants=tuple(float(v) for v in best.constants),
        residual_inf_norm=float(np.max(np.abs(r))),
        newton_iterations=best.iterations,
        starts_tried=tried,
        mode="least_squares",
        integrated_residual=integral,
        residual_history=tuple(best.history),
        candidates=tuple((tuple(float(v) for v in t.constants), j) for t, j in trials),
    )


def solve_constants(problem: ProblemSpec, cfg: MethodConfig, points=None,
                    least_squares: bool = False, panels: int = 200) -> SolveReport:
    """Constants for ``cfg``; plain PIA needs none and reports the unit multipliers."""
    sys = ResidualSystem(problem, cfg, points, panels)
    if not cfg.optimal:
        c = _plain_guess(cfg.iterations)
        r = sys.at_points(c)
        return SolveReport(tuple(c), float(np.max(np.abs(r))), 0, 0, "fixed", sys.integrated_square(c))
    return solve_least_squares(sys) if least_squares else solve_collocation(sys)
