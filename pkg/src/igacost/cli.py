"""Command-line driver: ``igacost <subcommand> [options]``.

Subcommands
-----------
solve          one model-problem solve
iterations     iteration-count sweep over spaces, degrees, h and preconditioners
kernels-bench  FLOPs and timings of sparse kernels on periodic mass matrices
nnz-report     measured and asymptotic nonzero ratios
cost-table     setup/apply FLOP estimates of every preconditioner
ilu-fit        the C0 ILU(0) per-DOF cost fit
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

import numpy as np

from . import __version__
from .assembly import AssembledSystem, model_system
from .bspline import Continuity
from .estimates import fit_c0_ilu_cost, cost_table, nnz_ratio, ratio_report
from .experiments import (
    ITERATION_COLUMNS,
    PC_ALIASES,
    Cell,
    iteration_sweep,
    kernels_bench,
    model_space,
    parse_h,
    solve_model,
)
from .krylov import pcg
from .precond import SSOR_BLOCKS, setup_preconditioner
from .space import make_space
from .sparsekit import read_matrix_market, write_matrix_market

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "IGACOST_OUTPUT_DIR"

SOLVE_COLUMNS = ITERATION_COLUMNS + ("converged", "max_error", "true_residual")
BENCH_COLUMNS = ("space", "p", "n", "N", "nnz", "kernel", "flops", "seconds")
NNZ_COLUMNS = ("p", "n", "N", "nnz_c0", "nnz_cpm1", "nnz_c0_condensed", "ratio", "ratio_condensed",
               "ratio_inf", "ratio_condensed_inf")
COST_COLUMNS = ("pc", "space", "p", "N", "r", "setup_formula", "apply_formula", "setup_flops", "apply_flops",
                "setup_exact")
FIT_COLUMNS = ("kind", "p", "value")


class UsageError(Exception):
    pass


# ----------------------------------------------------------------------------
# argument parsing helpers


def int_list(text: str) -> list[int]:
    """``"2"``, ``"1,3"`` or ``"2..5"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return out


def h_value(text: str) -> Fraction:
    try:
        return parse_h(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def h_list(text: str) -> list[Fraction]:
    return [h_value(t) for t in str(text).split(",") if t.strip()]


def number(text: str) -> int:
    v = float(text)
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(v)


def continuity_list(text: str) -> list[str]:
    try:
        return [Continuity.parse(t).value for t in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def pc_name(text: str) -> str:
    key = text.strip().lower()
    if key not in PC_ALIASES:
        raise argparse.ArgumentTypeError(f"unknown preconditioner {text!r}; choose from {sorted(PC_ALIASES)}")
    return PC_ALIASES[key]


def pc_list(text: str) -> list[str]:
    return [pc_name(t) for t in text.split(",")]


# ----------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6g}"
    if isinstance(v, Fraction):
        return str(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, Fraction):
        return str(v)
    return v


def render(rows, columns, fmt: str, table: str) -> str:
    """Rows as CSV, markdown or JSON lines; CSV/markdown get a schema comment line."""
    if fmt == "json":
        return "".join(json.dumps({c: _jsonable(r.get(c, "")) for c in columns}) + "\n" for r in rows)
    header = f"# igacost {table} schema v{SCHEMA_VERSION}\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
        return header + buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(columns) + " |", "|" + "|".join("---" for _ in columns) + "|"]
        lines += ["| " + " | ".join(_fmt(r.get(c, "")) for c in columns) + " |" for r in rows]
        return header + "\n".join(lines) + "\n"
    raise UsageError(f"unknown format {fmt!r}")


def _output_path(path: str | None) -> str | None:
    if path is None or path == "-":
        return None
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def emit(args, rows, columns, table):
    text = render(rows, columns, args.format, table)
    path = _output_path(args.output)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


# ----------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    if args.r is not None and args.pc != "bbb":
        raise UsageError("--r only applies to --pc bbb")
    if args.load_matrix:
        if args.condense:
            raise UsageError("--condense needs an assembled model problem, not --load-matrix")
        if args.pc in ("ebe", "bbb", "twogrid"):
            raise UsageError(f"--pc {args.pc} needs the mesh; use none, jacobi, ssor or ilu with --load-matrix")
        A = read_matrix_market(args.load_matrix)
        b = A.scipy @ np.ones(A.n_rows)
        space = make_space(1, 1, "c0", dim=1)
        system = AssembledSystem(space, A, b, np.zeros(0, np.int64), np.zeros(0), np.arange(A.n_rows))
        M = setup_preconditioner(args.pc, system, omega=args.omega, ssor_blocks=args.ssor_blocks)
        x, rep = pcg(A, b, M, rtol=args.rtol, maxit=args.maxit, norm=args.norm)
        row = {"space": "loaded", "p": "", "h": "", "pc": args.pc, "r": "",
               "iterations": rep.iterations if rep.converged else "DNC", "kappa": rep.kappa,
               "setup_flops": rep.setup_flops, "iterate_flops": rep.iterate_flops,
               "setup_s": rep.setup_seconds, "iterate_s": rep.iterate_seconds, "converged": rep.converged,
               "max_error": float(np.max(np.abs(x - 1))), "true_residual": rep.true_residual}
    else:
        try:
            space = model_space(args.continuity, args.p, args.h)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        cell = Cell(args.continuity, args.p, args.h, args.pc, args.r, args.omega, args.rtol, args.maxit, args.norm,
                    args.ssor_blocks)
        reason = cell.applicable()
        if reason:
            raise UsageError(reason)
        system = model_system(space)
        if args.dump_matrix:
            write_matrix_market(args.dump_matrix, system.matrix, symmetric=True)
        try:
            row, _ = solve_model(cell, condense=args.condense, system=system)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    emit(args, [row], SOLVE_COLUMNS, "solve")
    return 0 if row["converged"] or args.allow_dnc else 1


def _sweep_group(job):
    cont, p, h, pcs, kw = job
    return iteration_sweep([cont], [p], [h], pcs, **kw)


def cmd_iterations(args) -> int:
    if args.r is not None and "bbb" not in args.pc:
        raise UsageError("--r only applies when bbb is among the preconditioners")
    kw = dict(r=args.r, omega=args.omega, rtol=args.rtol, maxit=args.maxit, norm=args.norm,
              ssor_blocks=args.ssor_blocks)
    jobs = [(c, p, h, args.pc, kw) for c in args.continuity for p in args.p for h in args.h]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            groups = list(ex.map(_sweep_group, jobs))
    else:
        groups = [_sweep_group(j) for j in jobs]
    rows = [r for g in groups for r in g]
    emit(args, rows, ITERATION_COLUMNS, "iterations")
    dnc = any(r["iterations"] == "DNC" for r in rows)
    return 1 if dnc and not args.allow_dnc else 0


def cmd_kernels_bench(args) -> int:
    if args.reps < 5:
        raise UsageError("timings use the median of at least 5 repetitions")
    rows = []
    for p in args.p:
        try:
            rows += kernels_bench(p, args.n, args.reps, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    emit(args, rows, BENCH_COLUMNS, "kernels-bench")
    return 0


def cmd_nnz_report(args) -> int:
    if args.n:
        try:
            rows = ratio_report(args.p, args.n)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        rows = []
    for p in args.p:
        rows.append({"p": p, "n": "inf", "N": "inf", "ratio": float(nnz_ratio(p)),
                     "ratio_condensed": float(nnz_ratio(p, True)),
                     "ratio_inf": float(nnz_ratio(p)), "ratio_condensed_inf": float(nnz_ratio(p, True))})
    emit(args, rows, NNZ_COLUMNS, "nnz-report")
    return 0


def cmd_cost_table(args) -> int:
    rows = []
    for p in args.p:
        rows += cost_table(p, args.N, args.r)
    emit(args, rows, COST_COLUMNS, "cost-table")
    return 0


def cmd_ilu_fit(args) -> int:
    fit = fit_c0_ilu_cost(range(1, args.max_p + 1))
    rows = [{"kind": "point", "p": p, "value": c} for p, c in zip(fit.degrees, fit.costs)]
    deg = len(fit.coefficients) - 1
    rows += [{"kind": "coefficient", "p": deg - i, "value": c} for i, c in enumerate(fit.coefficients)]
    if len(fit.coefficients) == len(fit.reference):
        rows += [{"kind": "deviation", "p": deg - i, "value": d} for i, d in enumerate(fit.deviation())]
    emit(args, rows, FIT_COLUMNS, "ilu-fit")
    return 0


# ----------------------------------------------------------------------------


def _common(sp):
    sp.add_argument("--format", choices=("csv", "markdown", "json"), default="csv")
    sp.add_argument("--output", "-o", default=None, help=f"output file (relative paths go under ${OUTPUT_DIR_ENV})")


def _solver_opts(sp):
    sp.add_argument("--omega", type=float, default=1.0, help="SSOR relaxation parameter")
    sp.add_argument("--ssor-blocks", choices=SSOR_BLOCKS, default="point",
                    help="SSOR diagonal: pointwise, or runs of rows with identical patterns")
    sp.add_argument("--r", type=int, default=None, help="BBB overlap (default p//2)")
    sp.add_argument("--rtol", type=float, default=1e-8)
    sp.add_argument("--maxit", type=int, default=None, help="default 10*sqrt(N)+100")
    sp.add_argument("--norm", choices=("preconditioned", "natural"), default="preconditioned")
    sp.add_argument("--allow-dnc", action="store_true", help="exit 0 even if some solve hits maxit")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="igacost", description="B-spline model-problem solver cost experiments")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="one model-problem solve")
    s.add_argument("--p", type=int, default=2)
    s.add_argument("--continuity", type=lambda t: Continuity.parse(t).value, default="cpm1")
    s.add_argument("--h", type=h_value, default=Fraction(1, 4), help="half basis support, e.g. 1/8")
    s.add_argument("--pc", type=pc_name, default="ilu0")
    s.add_argument("--condense", action="store_true", help="solve the statically condensed system (C0)")
    s.add_argument("--dump-matrix", default=None, help="write the system matrix as Matrix Market")
    s.add_argument("--load-matrix", default=None, help="solve A x = A 1 for a Matrix Market matrix")
    _solver_opts(s)
    _common(s)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("iterations", help="iteration-count sweep")
    s.add_argument("--continuity", type=continuity_list, default=["c0", "cpm1"])
    s.add_argument("--p", type=int_list, default=[1, 2, 3, 4])
    s.add_argument("--h", type=h_list, default=h_list("1/2,1/4,1/8,1/16"))
    s.add_argument("--pc", type=pc_list, default=["jacobi", "ssor", "ilu0", "ebe", "bbb"])
    s.add_argument("--jobs", type=int, default=1, help="run (space, p, h) groups in parallel")
    _solver_opts(s)
    _common(s)
    s.set_defaults(func=cmd_iterations)

    s = sub.add_parser("kernels-bench", help="sparse kernel FLOPs and timings")
    s.add_argument("--p", type=int_list, default=[2, 3])
    s.add_argument("--n", type=int, default=24, help="unknowns per direction (divisible by p)")
    s.add_argument("--reps", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    _common(s)
    s.set_defaults(func=cmd_kernels_bench)

    s = sub.add_parser("nnz-report", help="nonzero ratios")
    s.add_argument("--p", type=int_list, default=[2, 3, 4, 5])
    s.add_argument("--n", type=int_list, default=None, help="measured grids, unknowns per direction")
    _common(s)
    s.set_defaults(func=cmd_nnz_report)

    s = sub.add_parser("cost-table", help="preconditioner FLOP estimates")
    s.add_argument("--p", type=int_list, default=[2])
    s.add_argument("--N", type=number, default=10**5)
    s.add_argument("--r", type=int, default=None)
    _common(s)
    s.set_defaults(func=cmd_cost_table)

    s = sub.add_parser("ilu-fit", help="C0 ILU(0) cost fit")
    s.add_argument("--max-p", type=int, default=7)
    _common(s)
    s.set_defaults(func=cmd_ilu_fit)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"igacost {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
