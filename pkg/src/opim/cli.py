"""``opim derive|solve|table|compare``.

Exit codes: 0 success, 2 usage or input error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import IntegrationOverflowError, NoConvergenceError, NoRealRootError, OpimError
from .iteration import describe_correction
from .problem import BUILTIN_PROBLEMS, METHODS, MethodConfig, load_builtin, load_problem
from .report import build_table, compare, run_method, write_csv
from .series import DEFAULT_DEGREE

EXIT_OK, EXIT_USAGE, EXIT_NOCONV = 0, 2, 3

log = logging.getLogger("opim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load(source: str, lam: float | None):
    """A problem file path, or the name of a bundled problem."""
    path = Path(source)
    if path.is_file():
        try:
            problem = load_problem(path)
        except OSError as err:
            raise UsageError(f"cannot open {source}: {err.strerror}") from None
    elif source in BUILTIN_PROBLEMS:
        problem = load_builtin(source)
    else:
        raise UsageError(f"cannot open {source}: no such file or bundled problem")
    if lam is not None:
        problem = problem.with_parameters(**{"lambda": lam})
    return problem


def _method(name: str) -> str:
    if name not in METHODS:
        raise argparse.ArgumentTypeError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return name


def _methods(text: str) -> list[str]:
    return [_method(m.strip()) for m in text.split(",") if m.strip()]


def _points(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad collocation list {text!r}") from None


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_derive(args) -> int:
    problem = _load(args.problem, args.lam)
    order, optimal = METHODS[args.method]
    if args.order is not None:
        order = args.order
    cfg = MethodConfig(order, optimal, 1)
    print(describe_correction(problem, cfg, unicode=args.unicode))
    return EXIT_OK


def cmd_solve(args) -> int:
    problem = _load(args.problem, args.lam)
    cfg = MethodConfig.from_name(args.method, args.iters, args.degree)
    report = run_method(problem, cfg, args.colloc, args.least_squares)
    if args.out:
        _emit(report.to_json() if args.out.endswith(".json") else report.to_csv(), args.out)
    err = report.max_error
    consts = ", ".join(f"{c:.12g}" for c in report.solve.constants)
    print(f"{problem.name} {cfg.name} m={cfg.iterations} mode={report.solve.mode} C=({consts}) "
          f"|R|_inf={report.solve.residual_inf_norm:.3e}"
          + ("" if err is None else f" max_error={err:.3e}"))
    return EXIT_OK


def cmd_table(args) -> int:
    _emit(build_table(args.number).to_csv(), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    problem = _load(args.problem, args.lam)
    header, rows, meta = compare(problem, args.methods, args.oracle, args.iters, args.colloc,
                                 args.least_squares, args.degree)
    _emit(write_csv(meta, header, rows), args.plot_data)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="opim", description="Optimal perturbation iteration for Bratu-type ODEs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def problem_args(sp):
        sp.add_argument("problem", help=f"problem file, or one of {', '.join(BUILTIN_PROBLEMS)}")
        sp.add_argument("--lambda", dest="lam", type=float, help="override the lambda parameter")

    d = sub.add_parser("derive", help="print the correction equation")
    problem_args(d)
    d.add_argument("--method", type=_method, default="opia11")
    d.add_argument("--order", type=int, choices=(1, 2), help="override the Taylor order of --method")
    d.add_argument("--unicode", action="store_true", help="use y_c / pi as unicode symbols")
    d.set_defaults(func=cmd_derive)

    s = sub.add_parser("solve", help="fit the constants and report the final iterate")
    problem_args(s)
    s.add_argument("--method", type=_method, default="opia11")
    s.add_argument("--iters", type=int, default=3)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--colloc", type=_points, help="comma-separated collocation points")
    g.add_argument("--least-squares", action="store_true")
    s.add_argument("--degree", type=int, default=DEFAULT_DEGREE)
    s.add_argument("--out", help="report file (.json for JSON, anything else CSV)")
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("table", help="reproduce an absolute-error table (all settings pinned)")
    t.add_argument("number", type=int, choices=(1, 2, 3))
    t.add_argument("--out", help="CSV file (default stdout)")
    t.set_defaults(func=cmd_table)

    c = sub.add_parser("compare", help="methods against a reference on 201 samples")
    problem_args(c)
    c.add_argument("--methods", type=_methods, default=["opia11"])
    c.add_argument("--oracle", choices=("exact", "rk4", "fd"), default="exact")
    c.add_argument("--iters", type=int, help="iterations for every method (default 3 / 2 by Taylor order)")
    g = c.add_mutually_exclusive_group()
    g.add_argument("--colloc", type=_points)
    g.add_argument("--least-squares", action="store_true")
    c.add_argument("--degree", type=int, default=DEFAULT_DEGREE)
    c.add_argument("--plot-data", help="CSV file for the curves (default stdout)")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"opim: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:  # --help
        return int(err.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as err:
        print(f"opim: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NoConvergenceError as err:
        print(f"opim: no convergence: {err} (starts tried: {err.starts_tried}, "
              f"best residual: {err.best_residual:.3e})", file=sys.stderr)
        return EXIT_NOCONV
    except NoRealRootError as err:
        print(f"opim: no real solution: {err}", file=sys.stderr)
        return EXIT_NOCONV
    except IntegrationOverflowError as err:
        print(f"opim: reference integration failed: {err}", file=sys.stderr)
        return EXIT_NOCONV
    except (OpimError, ValueError) as err:
        print(f"opim: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
