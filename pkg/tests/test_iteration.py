import math

import numpy as np
import pytest

from opim.errors import ProblemError, ResonanceError, UnsupportedProblemError
from opim.iteration import (LinearCorrectionODE, build_correction, describe_correction,
                            multipliers, run_iterations, solve_correction, trivial_start)
from opim.problem import MethodConfig, parse_problem
from opim.series import TruncatedSeries as S

GRID = np.linspace(0, 1, 101)


def _problem(nonlinear, conditions="bvp 0 0", extra=""):
    return parse_problem(f'linear = "ddy"\nnonlinear = "{nonlinear}"\nconditions = {conditions}\n{extra}')


def test_build_correction_example1(ex1):
    zero = S.zeros(32)
    ode = build_correction(ex1, MethodConfig(1, True, 1), zero)
    assert (ode.q1, ode.q0) == (0.0, 0.0)
    assert ode.rhs == S.constant(2.0, 32)
    ode = build_correction(ex1, MethodConfig(2, True, 1), zero)
    assert ode.q0 == -2.0 and ode.rhs == S.constant(2.0, 32)


def test_build_correction_example3_order2(ex3):
    ode = build_correction(ex3, MethodConfig(2, True, 1), S.zeros(32))
    assert ode.q0 == pytest.approx(-math.pi**2, rel=1e-15)
    assert ode.rhs.eval(0.4) == pytest.approx(-math.pi**2, rel=1e-15)


def test_build_correction_bratu_order2_general_iterate(ex2):
    # (y_c)'' + lambda y_c = -lambda y - y'' - lambda - lambda/2 y^2
    p = ex2.with_parameters(**{"lambda": 1.3})
    y = S([0, 0.5, -0.5], 32)
    ode = build_correction(p, MethodConfig(2, True, 1), y)
    x = GRID
    yv = y(x)
    expected = -1.3 * yv - (-1.0) - 1.3 - 0.65 * yv**2
    assert ode.q0 == pytest.approx(1.3)
    np.testing.assert_allclose(ode.rhs(x), expected, atol=1e-14)


def test_solve_correction_double_integration(ex1):
    y = solve_correction(LinearCorrectionODE(0.0, 0.0, S.constant(2.0, 32)), ex1)
    assert y.allclose(S([0, 0, 1], 32), rtol=0, atol=1e-15)


def test_solve_correction_cosh(ex1):
    y = solve_correction(LinearCorrectionODE(0.0, -2.0, S.constant(2.0, 32)), ex1)
    np.testing.assert_allclose(y(GRID), np.cosh(math.sqrt(2) * GRID) - 1, atol=1e-14)
    # cosh(sqrt 2) - 1 = 1.1781835566...
    assert y.eval(1.0) == pytest.approx(math.cosh(math.sqrt(2)) - 1, abs=1e-14)
    assert y.eval(1.0) == pytest.approx(1.1781835566, abs=1e-10)


def test_solve_correction_bvp(ex2):
    y = solve_correction(LinearCorrectionODE(0.0, 0.0, S.constant(-1.0, 32)), ex2)
    np.testing.assert_allclose(y(GRID), (GRID - GRID**2) / 2, atol=1e-15)


def test_resonance_detected(ex2):
    # sin(pi x) solves the homogeneous problem with zero boundary values
    with pytest.raises(ResonanceError):
        solve_correction(LinearCorrectionODE(0.0, math.pi**2, S.constant(1.0, 32)), ex2)


def test_correction_satisfies_ode(ex3):
    rng = np.random.default_rng(7)
    for q1, q0 in [(0.0, -math.pi**2), (0.0, 2.0), (0.7, -1.5)]:
        rhs = S(rng.normal(size=6), 32)
        ode = LinearCorrectionODE(q1, q0, rhs)
        y = solve_correction(ode, ex3)
        d1 = y.derivative()
        res = d1.derivative()(GRID) + q1 * d1(GRID) + q0 * y(GRID) - rhs(GRID)
        assert np.max(np.abs(res)) <= 1e-10
        assert abs(y.eval(0.0)) <= 1e-12 and abs(y.eval(1.0)) <= 1e-12


def test_first_iterates(ex1, ex2):
    s = run_iterations(ex1, MethodConfig(1, True, 1), (0.8,))
    assert s.iterate.allclose(S([0, 0, 0.8], 32), rtol=0, atol=1e-15)
    s = run_iterations(ex1, MethodConfig(1, True, 2), (1.0, 0.0))
    assert s.iterate.allclose(S([0, 0, 1, 0, 1 / 6], 32), rtol=0, atol=1e-15)
    s = run_iterations(ex2, MethodConfig(1, True, 1), (1.0,))
    assert s.iterate.eval(0.5) == pytest.approx(0.125, abs=1e-15)


def test_partial_sum_multipliers():
    assert list(multipliers(MethodConfig(1, True, 3), (1.0, 0.5, -0.25))) == [1.0, 1.5, 1.25]
    assert list(multipliers(MethodConfig(1, False, 3))) == [1.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        multipliers(MethodConfig(1, True, 3), (1.0,))


def test_three_term_structure(ex1):
    # y3 = a x^2 + b x^4 + c x^6 with a - 1 = (C0 - 1)(1 - S1)(1 - S2)
    C = (0.9, 0.2, -0.3)
    y = run_iterations(ex1, MethodConfig(1, True, 3), C).iterate
    S1, S2 = C[0] + C[1], sum(C)
    c = y.coefficients
    assert c[2] - 1 == pytest.approx((C[0] - 1) * (1 - S1) * (1 - S2), abs=1e-14)
    assert c[6] == pytest.approx(S2 * S1 * C[0] / 90, abs=1e-15)
    assert np.all(c[[0, 1, 3, 5]] == 0) and np.all(c[7:] == 0)


def test_closed_form_first_iterates(ex1, ex3):
    y = run_iterations(ex1, MethodConfig(2, True, 1), (1.0,)).iterate
    assert np.max(np.abs(y(GRID) - (np.cosh(math.sqrt(2) * GRID) - 1))) <= 1e-12
    y = run_iterations(ex3, MethodConfig(2, True, 1), (1.0,)).iterate
    pi = math.pi
    ref = 1 - np.cosh(pi * GRID) + math.tanh(pi / 2) * np.sinh(pi * GRID)
    assert np.max(np.abs(y(GRID) - ref)) <= 1e-10


@pytest.mark.parametrize("name", ["example1", "example2", "example3"])
@pytest.mark.parametrize("order", [1, 2])
def test_conditions_preserved(name, order, ex1, ex2, ex3):
    problem = {"example1": ex1, "example2": ex2, "example3": ex3}[name]
    rng = np.random.default_rng(11)
    for _ in range(5):
        C = rng.uniform(-2, 2, size=3)
        for y in run_iterations(problem, MethodConfig(order, True, 3), C).iterates:
            # large constants on Example 3 give coefficient sums ~1e4 with y ~ 40;
            # double precision allows ~1e-12 relative to the iterate's size there
            scale = max(1.0, np.max(np.abs(y(GRID))))
            assert abs(y.eval(0.0)) <= 1e-12 * scale
            second = y.derivative().eval(0.0) if problem.conditions.kind == "ivp" else y.eval(1.0)
            assert abs(second) <= 1e-12 * scale


def test_nonhomogeneous_conditions_preserved():
    p = _problem("exp(y)", "bvp 0.5 -0.25")
    assert trivial_start(p, 32).allclose(S([0.5, -0.75], 32), rtol=0, atol=0)
    for y in run_iterations(p, MethodConfig(2, True, 3), (0.7, 0.1, 0.2)).iterates:
        assert y.eval(0.0) == pytest.approx(0.5, abs=1e-12)
        assert y.eval(1.0) == pytest.approx(-0.25, abs=1e-12)
    p = _problem("exp(y)", "ivp 1 2")
    y = run_iterations(p, MethodConfig(1, True, 2), (0.5, 0.5)).iterate
    assert y.eval(0.0) == pytest.approx(1.0, abs=1e-12)
    assert y.derivative().eval(0.0) == pytest.approx(2.0, abs=1e-12)


def test_pia_equals_unit_multipliers(ex2):
    a = run_iterations(ex2, MethodConfig(1, False, 3)).iterate
    b = run_iterations(ex2, MethodConfig(1, True, 3), (1.0, 0.0, 0.0)).iterate
    assert a == b


def test_unsupported_problems():
    with pytest.raises(UnsupportedProblemError):
        run_iterations(_problem("exp(x)*exp(y)"), MethodConfig(1, True, 1), (1.0,))
    with pytest.raises(UnsupportedProblemError):
        # eps given explicitly: N_y = 2y at eps=0 is not a constant coefficient
        run_iterations(_problem("y^2 + eps"), MethodConfig(1, True, 1), (1.0,))


@pytest.mark.parametrize("name,order,text", [
    ("ex1", 1, "(y_c)'' = -y'' + 2 y + 2"),
    ("ex1", 2, "(y_c)'' - 2 (y_c) = -y'' + 2 y + y² + 2"),
    ("ex2", 1, "(y_c)'' = -λ y - (y'' + λ)"),
    ("ex2", 2, "(y_c)'' + λ (y_c) = -λ y - (λ/2) y² - (y'' + λ)"),
    ("ex3", 1, "(y_c)'' = π² y - (y'' + π²)"),
    ("ex3", 2, "(y_c)'' - π² (y_c) = π² y - (π²/2) y² - (y'' + π²)"),
])
def test_describe_correction(name, order, text, request):
    problem = request.getfixturevalue(name)
    assert describe_correction(problem, MethodConfig(order, True, 1)) == text


def test_describe_ascii(ex3):
    assert describe_correction(ex3, MethodConfig(2, True, 1), unicode=False).startswith("(y_c)'' - pi^2 (y_c)")


# -- problems and problem files ---------------------------------------------------

def test_problem_file_parsing(tmp_path):
    f = tmp_path / "p.prob"
    f.write_text('# comment\nlinear = "ddy + 2*y"\nnonlinear = "lambda*exp(y)"  # trailing\n'
                 "domain = 0 2\nconditions = ivp 0 1\nparam lambda = 0.5\nname = mine\n")
    from opim.problem import load_problem
    p = load_problem(f)
    assert p.linear_coeffs == (1.0, 0.0, 2.0)
    assert p.domain == (0.0, 2.0) and p.conditions.kind == "ivp" and p.conditions.second == 1.0
    assert p.parameters == {"lambda": 0.5} and p.name == "mine"


@pytest.mark.parametrize("text", [
    'nonlinear = "exp(y)"\nconditions = bvp 0 0',
    'linear = "ddy"\nnonlinear = "exp(y)"\nconditions = neither 0 0',
    'linear = "ddy"\nnonlinear = "lambda*exp(y)"\nconditions = bvp 0 0',
    'linear = "y*ddy"\nnonlinear = "exp(y)"\nconditions = bvp 0 0',
    'linear = "y"\nnonlinear = "exp(y)"\nconditions = bvp 0 0',
    'linear = "ddy"\nnonlinear = "exp(y"\nconditions = bvp 0 0',
    'linear = "ddy"\nnonlinear = "exp(y)"\nconditions = bvp 0',
    'linear = "ddy"\nnonlinear = "exp(y)"\ndomain = 1 0\nconditions = bvp 0 0',
    'linear = "ddy"\nbogus = 3\nnonlinear = "exp(y)"\nconditions = bvp 0 0',
])
def test_problem_file_errors(text):
    with pytest.raises(ProblemError):
        parse_problem(text)


def test_method_names():
    assert MethodConfig.from_name("opia12", 2).name == "opia12"
    assert not MethodConfig.from_name("pia11", 3).optimal
    with pytest.raises(ProblemError):
        MethodConfig.from_name("opia13", 2)
    with pytest.raises(ProblemError):
        MethodConfig(1, True, 0)
