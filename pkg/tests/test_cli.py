import csv
import io
import json

import numpy as np
import pytest

from opim.cli import main
from opim.report import COMPARE_SAMPLES, RunReport

PUBLISHED_EX1 = (1.00096007239, 0.034138423506, -0.049127633506)


def read_csv(text):
    meta = [line[2:] for line in text.splitlines() if line.startswith("# ")]
    body = [line for line in text.splitlines() if not line.startswith("#")]
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    return meta, rows[0], rows[1:]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_derive_example1(capsys):
    code, out, _ = run(capsys, "derive", "example1", "--method", "opia11")
    assert code == 0 and out.strip() == "(y_c)'' = -y'' + 2 y + 2"


def test_derive_example3_order2(capsys):
    code, out, _ = run(capsys, "derive", "example3", "--method", "opia12")
    assert code == 0 and out.startswith("(y_c)'' - pi^2 (y_c) =")


def test_derive_unicode(capsys):
    code, out, _ = run(capsys, "derive", "example3", "--method", "opia12", "--unicode")
    assert code == 0 and "π" in out


def test_derive_from_file(capsys, tmp_path):
    f = tmp_path / "p.prob"
    f.write_text('linear = "ddy"\nnonlinear = "-2*exp(y)"\nconditions = ivp 0 0\n')
    code, out, _ = run(capsys, "derive", str(f))
    assert code == 0 and out.strip() == "(y_c)'' = -y'' + 2 y + 2"


def test_missing_file(capsys):
    code, _, err = run(capsys, "derive", "no/such/file.prob")
    assert code == 2 and "cannot open" in err


def test_bad_problem_file(capsys, tmp_path):
    f = tmp_path / "bad.prob"
    f.write_text('linear = "ddy"\nnonlinear = "exp(y"\nconditions = ivp 0 0\n')
    code, _, err = run(capsys, "derive", str(f))
    assert code == 2 and err


def test_unknown_method(capsys):
    assert run(capsys, "solve", "example1", "--method", "opia99")[0] == 2
    assert run(capsys, "compare", "example1", "--methods", "pia11,foo")[0] == 2


def test_solve_example1_reproduction_points_no_root(capsys):
    code, _, err = run(capsys, "solve", "example1", "--method", "opia11", "--iters", "3", "--colloc", "0.3,0.6,0.9")
    assert code == 3
    assert "starts tried: 6" in err and "best residual" in err


@pytest.mark.xfail(strict=True, reason="published Example 1 constants are not a real collocation root (see ledger)")
def test_solve_example1_reproduces_published_constants(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "example1", "--iters", "3", "--colloc", "0.3,0.6,0.9", "--out", str(out))
    assert code == 0
    c = json.loads(out.read_text())["solve"]["constants"]
    assert np.allclose(c, PUBLISHED_EX1, atol=1e-3)


def test_solve_example2_one_iteration(capsys, tmp_path, ex2):
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "solve", "example2", "--iters", "1", "--out", str(out))
    assert code == 0 and "|R|_inf=" in stdout and "max_error=" in stdout
    rep = RunReport.from_json(out.read_text())
    c0 = rep.solve.constants[0]
    for r in rep.rows:
        assert r.approx == pytest.approx(-c0 / 2 * (r.x**2 - r.x), abs=1e-14)
    assert np.isfinite(rep.max_error)


def test_solve_example2_past_turning_point(capsys):
    code, out, err = run(capsys, "solve", "example2", "--lambda", "10", "--iters", "3")
    assert code == 3 and out == "" and "no real solution" in err


def test_solve_least_squares_csv(capsys, tmp_path):
    out = tmp_path / "r.csv"
    code, _, _ = run(capsys, "solve", "example3", "--method", "opia12", "--iters", "2", "--least-squares",
                     "--out", str(out))
    assert code == 0
    meta, header, rows = read_csv(out.read_text())
    assert header == ["x", "approx", "exact", "abs_error"] and "mode: least_squares" in meta
    for x, a, e, d in rows:
        assert float(d) == float(format(abs(float(a) - float(e)), ".15g"))


def test_json_round_trip_detects_tampering(capsys, tmp_path):
    out = tmp_path / "r.json"
    assert run(capsys, "solve", "example2", "--iters", "2", "--out", str(out))[0] == 0
    text = out.read_text()
    rep = RunReport.from_json(text)
    assert json.loads(rep.to_json()) == json.loads(text)
    d = json.loads(text)
    d["rows"][3]["abs_error"] += 1e-17
    with pytest.raises(ValueError):
        RunReport.from_json(json.dumps(d))


@pytest.mark.parametrize("number,x,value", [(1, 1.0, 1.231252940), (2, 0.3, 0.1176084), (3, 0.5, 0.693147180)])
def test_table_exact_column(table, number, x, value):
    _, header, rows = read_csv(table(number).to_csv())
    row = next(r for r in rows if float(r[0]) == x)
    tol = 1e-6 if number == 2 else 1e-9  # published digits are truncated
    assert abs(float(row[header.index("exact")]) - value) <= tol


def test_table_layout(table):
    _, header, rows = read_csv(table(1).to_csv())
    assert header == ["x", "opia11_y1_abs_error", "opia11_y2_abs_error", "opia11_y3_abs_error",
                      "opia12_y1_abs_error", "opia12_y2_abs_error", "exact"]
    assert [float(r[0]) for r in rows] == pytest.approx(np.arange(1, 11) / 10)
    assert [float(r[0]) for r in read_csv(table(3).to_csv())[2]] == pytest.approx(np.arange(1, 10) / 10)


def test_table_cli_matches_library(capsys, tmp_path, table):
    out = tmp_path / "t3.csv"
    assert run(capsys, "table", "3", "--out", str(out))[0] == 0
    assert out.read_text() == table(3).to_csv()


def test_compare_opia_beats_pia(capsys, tmp_path):
    out = tmp_path / "c.csv"
    code, _, _ = run(capsys, "compare", "example1", "--methods", "pia11,opia11", "--oracle", "exact",
                     "--plot-data", str(out))
    assert code == 0
    _, header, rows = read_csv(out.read_text())
    assert header == ["x", "pia11", "opia11", "exact"] and len(rows) == COMPARE_SAMPLES
    v = np.array(rows, dtype=float)
    assert np.max(np.abs(v[:, 2] - v[:, 3])) < np.max(np.abs(v[:, 1] - v[:, 3]))


@pytest.mark.xfail(strict=True, reason="collocated OPIA(1,2) y2 for Example 3 is ~2e-4 from the solution (see ledger)")
def test_compare_example3_fd(capsys):
    code, out, _ = run(capsys, "compare", "example3", "--methods", "opia12", "--oracle", "fd")
    _, _, rows = read_csv(out)
    v = np.array(rows, dtype=float)
    assert code == 0 and np.max(np.abs(v[:, 1] - v[:, 2])) <= 1e-4


def test_compare_example3_fd_least_squares(capsys):
    code, out, _ = run(capsys, "compare", "example3", "--methods", "opia12", "--oracle", "fd", "--least-squares")
    _, _, rows = read_csv(out)
    v = np.array(rows, dtype=float)
    assert code == 0 and np.max(np.abs(v[:, 1] - v[:, 2])) <= 1e-4


def test_compare_rk4_on_bvp_is_an_error(capsys):
    assert run(capsys, "compare", "example2", "--oracle", "rk4")[0] == 2


def test_usage_errors(capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "table", "4")[0] == 2
    assert run(capsys, "solve", "example1", "--colloc", "a,b")[0] == 2
    assert run(capsys, "--help")[0] == 0
