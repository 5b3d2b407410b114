"""Run reports, reproduction tables and their CSV / JSON serialisation."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .constants import REPRODUCTION_POINTS, SolveReport, default_points, solve_constants
from .errors import NoConvergenceError, OpimError
from .iteration import run_iterations
from .oracle import exact_for, fd_newton_bvp, rk4_ivp
from .problem import MethodConfig, ProblemSpec, load_builtin
from .series import DEFAULT_DEGREE

__all__ = [
    "fmt", "Row", "RunReport", "run_method", "reproduction_constants",
    "TableColumn", "Table", "build_table", "TABLE_PROBLEMS", "TABLE_LAYOUT",
    "compare", "COMPARE_SAMPLES", "write_csv",
]

SIG_DIGITS = 15
COMPARE_SAMPLES = 201
TABLE_PROBLEMS = {1: ("example1", {}), 2: ("example2", {"lambda": 1.0}), 3: ("example3", {})}
# (method, iterations) per error column, left to right
TABLE_LAYOUT = (("opia11", 1), ("opia11", 2), ("opia11", 3), ("opia12", 1), ("opia12", 2))
FALLBACK_NOTE = "least_squares (collocation system has no real root at these points)"


def fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return format(float(v), f".{SIG_DIGITS}g")


def _rounded(v: float) -> float:
    return float(fmt(v))


@dataclass(frozen=True)
class Row:
    x: float
    approx: float
    exact: float | None
    abs_error: float | None


def _rows(y, exact, xs) -> list[Row]:
    approx = np.asarray(y(xs), dtype=float)
    ref = None if exact is None else np.asarray(exact(xs), dtype=float)
    rows = []
    for i, x in enumerate(xs):
        e = None if ref is None else float(ref[i])
        rows.append(Row(float(x), float(approx[i]), e, None if e is None else abs(float(approx[i]) - e)))
    return rows


@dataclass
class RunReport:
    problem: str
    method: str
    iterations: int
    solve: SolveReport
    rows: list
    collocation_points: tuple = ()
    degree_cap: int = DEFAULT_DEGREE
    wall_time: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def max_error(self) -> float | None:
        errs = [r.abs_error for r in self.rows if r.abs_error is not None]
        return max(errs) if errs else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solve"] = asdict(self.solve)
        d["rows"] = [asdict(r) for r in self.rows]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        """Load a report; abs_error is recomputed and must match what was stored."""
        d = json.loads(text)
        rows = []
        for r in d["rows"]:
            row = Row(**r)
            if row.exact is not None and abs(row.approx - row.exact) != row.abs_error:
                raise ValueError(f"stored abs_error at x={row.x} does not match |approx - exact|")
            rows.append(row)
        s = d["solve"]
        s["constants"] = tuple(s["constants"])
        s["residual_history"] = tuple(s["residual_history"])
        s["candidates"] = tuple((tuple(c), j) for c, j in s["candidates"])
        return cls(d["problem"], d["method"], d["iterations"], SolveReport(**s), rows,
                   tuple(d["collocation_points"]), d["degree_cap"], d["wall_time"], d["notes"])

    def metadata(self) -> list[tuple[str, str]]:
        meta = [("problem", self.problem), ("method", self.method), ("iterations", str(self.iterations)),
                ("mode", self.solve.mode), ("constants", " ".join(fmt(c) for c in self.solve.constants)),
                ("collocation_points", " ".join(fmt(p) for p in self.collocation_points) or "-"),
                ("residual_inf_norm", fmt(self.solve.residual_inf_norm)), ("degree_cap", str(self.degree_cap))]
        meta += [("note", n) for n in self.notes]
        return meta

    def to_csv(self) -> str:
        body = []
        for r in self.rows:
            a = _rounded(r.approx)
            if r.exact is None:
                body.append([fmt(r.x), fmt(a), "", ""])
            else:
                e = _rounded(r.exact)
                body.append([fmt(r.x), fmt(a), fmt(e), fmt(abs(a - e))])
        return write_csv(self.metadata(), ["x", "approx", "exact", "abs_error"], body)


def write_csv(meta, header, rows) -> str:
    buf = io.StringIO()
    for k, v in meta:
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def run_method(problem: ProblemSpec, cfg: MethodConfig, points=None, least_squares: bool = False,
               xs=None) -> RunReport:
    """Constants solve plus the final iterate sampled on ``xs`` (default: 11 uniform points)."""
    t0 = time.perf_counter()
    a, b = problem.domain
    if points is None and not least_squares:
        points = default_points(a, b, cfg.iterations)
    report = solve_constants(problem, cfg, points, least_squares)
    y = run_iterations(problem, cfg, report.constants).iterate
    xs = np.linspace(a, b, 11) if xs is None else np.asarray(xs, dtype=float)
    rows = _rows(y, exact_for(problem), xs)
    pts = () if least_squares or not cfg.optimal else tuple(float(p) for p in points)
    return RunReport(problem.name, cfg.name, cfg.iterations, report, rows, pts, cfg.degree_cap,
                     time.perf_counter() - t0)


def reproduction_constants(problem: ProblemSpec, cfg: MethodConfig) -> tuple[SolveReport, tuple, str | None]:
    """Pinned reproduction settings: the first m of (0.3, 0.6, 0.9).

    When the collocation system has no real root there, the constants fall
    back to the integrated least-squares fit and the returned note says so.
    """
    points = REPRODUCTION_POINTS[: cfg.iterations] if cfg.iterations <= len(REPRODUCTION_POINTS) else None
    if points is None:
        raise OpimError("reproduction runs use at most three collocation points")
    try:
        return solve_constants(problem, cfg, points), points, None
    except NoConvergenceError:
        if not cfg.optimal:
            raise
        return solve_constants(problem, cfg, least_squares=True), points, FALLBACK_NOTE


@dataclass(frozen=True)
class TableColumn:
    method: str
    iterations: int
    solve: SolveReport
    points: tuple
    note: str | None
    errors: np.ndarray

    @property
    def label(self) -> str:
        return f"{self.method}_y{self.iterations}_abs_error"


@dataclass(frozen=True)
class Table:
    number: int
    problem: ProblemSpec
    xs: np.ndarray
    exact: np.ndarray
    columns: tuple

    def column(self, method: str, iterations: int) -> TableColumn:
        for c in self.columns:
            if c.method == method and c.iterations == iterations:
                return c
        raise KeyError((method, iterations))

    def to_csv(self) -> str:
        meta = [("table", str(self.number)), ("problem", self.problem.name),
                ("parameters", " ".join(f"{k}={fmt(v)}" for k, v in sorted(self.problem.parameters.items())) or "-"),
                ("degree_cap", str(DEFAULT_DEGREE)),
                ("collocation_points", " ".join(fmt(p) for p in REPRODUCTION_POINTS) + " (first m used for m < 3)")]
        if self.problem.name == "example3":
            meta.append(("assumption", "collocation points for this problem are assumed, not given with its constants"))
        for c in self.columns:
            meta.append((c.label, f"mode={c.note or c.solve.mode} constants={' '.join(fmt(v) for v in c.solve.constants)}"
                                  f" residual_inf_norm={fmt(c.solve.residual_inf_norm)}"))
        header = ["x"] + [c.label for c in self.columns] + ["exact"]
        body = [[fmt(x)] + [fmt(c.errors[i]) for c in self.columns] + [fmt(self.exact[i])]
                for i, x in enumerate(self.xs)]
        return write_csv(meta, header, body)


def table_grid(number: int) -> np.ndarray:
    n = 10 if number == 1 else 9
    return np.round(np.arange(1, n + 1) * 0.1, 12)


def build_table(number: int, layout=TABLE_LAYOUT) -> Table:
    """Absolute-error table with every reproduction default pinned."""
    if number not in TABLE_PROBLEMS:
        raise ValueError("table must be 1, 2 or 3")
    name, params = TABLE_PROBLEMS[number]
    problem = load_builtin(name)
    if params:
        problem = problem.with_parameters(**params)
    xs = table_grid(number)
    exact = np.asarray(exact_for(problem)(xs), dtype=float)
    cols = []
    for method, m in layout:
        cfg = MethodConfig.from_name(method, m, DEFAULT_DEGREE)
        rep, pts, note = reproduction_constants(problem, cfg)
        y = run_iterations(problem, cfg, rep.constants).iterate
        cols.append(TableColumn(method, m, rep, pts, note, np.abs(np.asarray(y(xs)) - exact)))
    return Table(number, problem, xs, exact, tuple(cols))


def _oracle_values(problem: ProblemSpec, oracle: str, xs: np.ndarray) -> np.ndarray:
    if oracle == "exact":
        sol = exact_for(problem)
        if sol is None:
            raise OpimError(f"problem {problem.name!r} has no closed-form solution")
        return np.asarray(sol(xs), dtype=float)
    if oracle == "rk4":
        return rk4_ivp(problem, 1e-4).at(xs)
    if oracle == "fd":
        return fd_newton_bvp(problem, 2001).at(xs)
    raise OpimError(f"unknown oracle {oracle!r}")


def compare(problem: ProblemSpec, methods, oracle: str = "exact", iterations=None, points=None,
            least_squares: bool = False, degree_cap: int = DEFAULT_DEGREE):
    """Columns x, one per method and the oracle on 201 uniform samples.

    Returns ``(header, rows, meta)``; each method uses 3 iterations at Taylor
    order 1 and 2 at order 2 unless ``iterations`` is given.  Without explicit
    points or least squares the constants follow :func:`reproduction_constants`.
    """
    a, b = problem.domain
    xs = np.linspace(a, b, COMPARE_SAMPLES)
    ref = _oracle_values(problem, oracle, xs)
    meta = [("problem", problem.name), ("oracle", oracle), ("degree_cap", str(degree_cap))]
    cols = []
    for method in methods:
        order = MethodConfig.from_name(method, 1).taylor_order
        m = iterations or (3 if order == 1 else 2)
        cfg = MethodConfig.from_name(method, m, degree_cap)
        note = None
        if least_squares or points is not None:
            rep = solve_constants(problem, cfg, points, least_squares)
        else:
            rep, _, note = reproduction_constants(problem, cfg)
        y = run_iterations(problem, cfg, rep.constants).iterate
        vals = np.asarray(y(xs), dtype=float)
        cols.append(vals)
        meta.append((method, f"iterations={m} mode={note or rep.mode} constants={' '.join(fmt(c) for c in rep.constants)}"
                             f" max_abs_diff={fmt(np.max(np.abs(vals - ref)))}"))
    header = ["x"] + list(methods) + [oracle]
    rows = [[fmt(x)] + [fmt(c[i]) for c in cols] + [fmt(ref[i])] for i, x in enumerate(xs)]
    return header, rows, meta
