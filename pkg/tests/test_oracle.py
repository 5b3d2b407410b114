import math

import numpy as np
import pytest

from opim import expr as ex
from opim.errors import (DomainError, IntegrationOverflowError, NoConvergenceError,
                         NoRealRootError, ProblemError)
from opim.oracle import (ExactSolution, erratum_eval, exact_for, fd_newton_bvp, rk4_ivp,
                         solve_theta)
from opim.problem import parse_problem


def _g(t, lam):
    return t - math.sqrt(2 * lam) * math.cosh(t / 4)


def test_theta_lower_branch():
    t = solve_theta(1.0)
    assert t == pytest.approx(1.5171646, abs=1e-7)
    assert abs(math.sqrt(2) * math.cosh(t / 4) - t) <= 1e-12


def test_theta_upper_branch():
    t = solve_theta(1.0, "upper")
    assert 4 < t < 20 and abs(_g(t, 1.0)) <= 1e-12
    assert t > solve_theta(1.0)


@pytest.mark.parametrize("lam", [0.1, 1.0, 2.0, 3.5])
def test_theta_residual(lam):
    for branch in ("lower", "upper"):
        assert abs(_g(solve_theta(lam, branch), lam)) <= 1e-12


@pytest.mark.parametrize("lam", [3.52, 10.0, 100.0, 0.0, -1.0])
def test_theta_no_real_root(lam):
    if lam > 0:
        grid = np.linspace(0, 100, 100001)
        assert np.all(grid - np.sqrt(2 * lam) * np.cosh(grid / 4) < 0)
    with pytest.raises(NoRealRootError):
        solve_theta(lam)


def test_exact_values_from_tables():
    assert ExactSolution("example1")(0.1) == pytest.approx(0.010016711, abs=1e-9)
    assert ExactSolution("bratu1", lam=1.0)(0.5) == pytest.approx(0.1405383, abs=1e-6)
    assert ExactSolution("bratu2")(0.5) == pytest.approx(math.log(2), abs=1e-12)


def test_exact_domain_errors():
    with pytest.raises(DomainError):
        ExactSolution("example1")(2.0)
    with pytest.raises(DomainError):
        ExactSolution("bratu2")(1.5)
    with pytest.raises(ValueError):
        ExactSolution("bratu1")
    with pytest.raises(ValueError):
        ExactSolution("bogus")


def test_exact_for_problems(ex1, ex2, ex3):
    assert exact_for(ex1).kind == "example1"
    assert exact_for(ex2).theta == pytest.approx(1.5171646, abs=1e-7)
    assert exact_for(ex3).kind == "bratu2"
    assert exact_for(parse_problem('linear = "ddy"\nnonlinear = "y^2"\nconditions = ivp 0 1')) is None


def _stencil_residual(problem, sol, x, h=1e-4):
    y = lambda t: sol(t)
    d1 = (-y(x + 2 * h) + 8 * y(x + h) - 8 * y(x - h) + y(x - 2 * h)) / (12 * h)
    d2 = (-y(x + 2 * h) + 16 * y(x + h) - 30 * y(x) + 16 * y(x - h) - y(x - 2 * h)) / (12 * h**2)
    p2, p1, p0 = problem.linear_coeffs
    n = ex.eval_at(problem.nonlinearity, {"x": x, "y": y(x), "dy": d1}, problem.parameters)
    return p2 * d2 + p1 * d1 + p0 * y(x) + n


def test_exact_solutions_satisfy_their_odes(ex1, ex2, ex3):
    x = np.linspace(0.05, 0.95, 37)
    for p in (ex1, ex2, ex3):
        assert np.max(np.abs(_stencil_residual(p, exact_for(p), x))) <= 1e-5


def test_exact_boundary_conditions_and_erratum():
    sol = ExactSolution("bratu2")
    assert abs(sol(0.0)) <= 1e-15 and abs(sol(1.0)) <= 1e-15
    assert abs(erratum_eval(0.0)) > 0.6 and abs(erratum_eval(1.0)) > 0.6
    b1 = ExactSolution("bratu1", lam=2.0)
    assert abs(b1(0.0)) <= 1e-14 and abs(b1(1.0)) <= 1e-14


def test_rk4_example1(ex1):
    grid = rk4_ivp(ex1, 1e-4)
    assert grid.x[0] == 0.0 and grid.x[-1] == 1.0
    assert grid.y[-1] == pytest.approx(1.2312529, abs=1e-7)


def test_rk4_is_exact_for_linear_motion():
    p = parse_problem('linear = "ddy"\nnonlinear = "0"\nconditions = ivp 0 1')
    grid = rk4_ivp(p, 0.01)
    assert np.max(np.abs(grid.y - grid.x)) <= 1e-14


def test_rk4_overflow_near_pole(ex1):
    with pytest.raises(IntegrationOverflowError) as info:
        rk4_ivp(ex1, 1e-4, x_end=2.0)
    assert info.value.last_x == pytest.approx(math.pi / 2, abs=1e-3)


def test_rk4_order_four(ex1):
    exact = ExactSolution("example1")(1.0)
    e1 = abs(rk4_ivp(ex1, 0.05).y[-1] - exact)
    e2 = abs(rk4_ivp(ex1, 0.025).y[-1] - exact)
    assert 12 <= e1 / e2 <= 20


def test_rk4_rejects_bvp(ex2):
    with pytest.raises(ProblemError):
        rk4_ivp(ex2, 0.01)
    with pytest.raises(ValueError):
        rk4_ivp(parse_problem('linear = "ddy"\nnonlinear = "0"\nconditions = ivp 0 1'), 0.0)


def test_fd_bratu(ex2, ex3):
    g = fd_newton_bvp(ex2, 2001)
    assert np.max(np.abs(g.y - exact_for(ex2)(g.x))) <= 1e-6
    g = fd_newton_bvp(ex3, 2001)
    assert g.at(0.5) == pytest.approx(math.log(2), abs=1e-6)


def test_fd_order_two(ex2):
    exact = exact_for(ex2)
    errs = []
    for n in (41, 81):
        g = fd_newton_bvp(ex2, n)
        errs.append(np.max(np.abs(g.y - exact(g.x))))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_fd_linear_zero(ex2):
    g = fd_newton_bvp(ex2.with_parameters(**{"lambda": 0.0}), 51)
    assert np.all(g.y == 0.0)


def test_fd_diverges_past_turning_point(ex2, ex1):
    with pytest.raises(NoConvergenceError):
        fd_newton_bvp(ex2.with_parameters(**{"lambda": 10.0}), 201)
    with pytest.raises(ProblemError):
        fd_newton_bvp(ex1, 201)
    with pytest.raises(ValueError):
        fd_newton_bvp(ex2, 4)
