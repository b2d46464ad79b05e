"""Experiment cells behind the CLI: model-problem solves, iteration sweeps
and the periodic mass-matrix kernel benchmark."""
from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .assembly import AssembledSystem, assemble, full_solution, model_system, recover_interior, static_condense
from .bspline import Continuity
from .krylov import pcg
from .precond import setup_preconditioner
from .space import Space, lattice_lower_mask, make_space
from .sparsekit import FlopCounter, ilu0_factor, ilu0_flop_estimate, ilu0_solve, spmv, ssor_apply

__all__ = [
    "ITERATION_COLUMNS",
    "PC_ALIASES",
    "parse_h",
    "format_h",
    "elements_for_h",
    "model_space",
    "Cell",
    "run_cell",
    "solve_model",
    "iteration_sweep",
    "kernels_bench",
]

ITERATION_COLUMNS = ("space", "p", "h", "pc", "r", "iterations", "kappa",
                     "setup_flops", "iterate_flops", "setup_s", "iterate_s")

PC_ALIASES = {"ilu": "ilu0", "ilu0": "ilu0", "none": "none", "jacobi": "jacobi", "ssor": "ssor",
              "ebe": "ebe", "bbb": "bbb", "twogrid": "twogrid", "two-grid": "twogrid"}


def parse_h(value) -> Fraction:
    h = Fraction(value)
    if h <= 0 or h > 1:
        raise ValueError(f"h must lie in (0, 1], got {value}")
    return h


def format_h(h: Fraction) -> str:
    return str(Fraction(h))


def elements_for_h(continuity, p: int, h) -> int:
    """Per-direction element count with half basis support ``h``.

    C0: ``1/h``.  C^(p-1): ``(p+1)/(2h)``, which must be an integer.
    """
    continuity = Continuity.parse(continuity)
    h = parse_h(h)
    n = 1 / h if continuity is Continuity.C0 else Fraction(p + 1, 2) / h
    if n.denominator != 1:
        raise ValueError(f"h = {h} gives a non-integer element count {n} for {continuity.value}, p={p}")
    return int(n)


def model_space(continuity, p: int, h) -> Space:
    return make_space(p, elements_for_h(continuity, p, h), continuity)


@dataclass
class Cell:
    """One (space, p, h, preconditioner) experiment."""

    continuity: str
    p: int
    h: Fraction
    pc: str
    r: int | None = None
    omega: float = 1.0
    rtol: float = 1e-8
    maxit: int | None = None
    norm: str = "preconditioned"
    ssor_blocks: str = "point"

    def applicable(self) -> str | None:
        """Reason this cell cannot be built, or ``None``."""
        cont = Continuity.parse(self.continuity)
        try:
            n = elements_for_h(cont, self.p, self.h)
        except ValueError as exc:
            return str(exc)
        if self.pc == "bbb" and cont is Continuity.C0 and self.p > 1:
            return "BBB is defined for C^(p-1) spaces"
        if self.pc == "twogrid" and n % 2:
            return f"two-grid needs an even element count (got {n})"
        return None


def run_cell(cell: Cell, system: AssembledSystem | None = None) -> dict:
    """Solve one cell; returns a row keyed by :data:`ITERATION_COLUMNS` plus diagnostics."""
    return _solve_cell(cell, system)[0]


def _solve_cell(cell: Cell, system: AssembledSystem | None):
    pc = PC_ALIASES[cell.pc]
    if system is None:
        system = model_system(model_space(cell.continuity, cell.p, cell.h))
    r = cell.r
    if pc == "bbb" and r is None:
        r = cell.p // 2
    M = setup_preconditioner(pc, system, omega=cell.omega, r=r, ssor_blocks=cell.ssor_blocks)
    x, rep = pcg(system.matrix, system.rhs, M, rtol=cell.rtol, maxit=cell.maxit, norm=cell.norm)
    return {
        "space": Continuity.parse(cell.continuity).value,
        "p": cell.p,
        "h": format_h(cell.h),
        "pc": pc,
        "r": r if pc == "bbb" else "",
        "iterations": rep.iterations if rep.converged else "DNC",
        "kappa": rep.kappa,
        "setup_flops": rep.setup_flops,
        "iterate_flops": rep.iterate_flops,
        "setup_s": rep.setup_seconds,
        "iterate_s": rep.iterate_seconds,
        "converged": rep.converged,
        "max_error": float(np.max(np.abs(x - 1.0))) if x.size else 0.0,
        "true_residual": rep.true_residual,
        "rhs_norm": rep.rhs_norm,
    }, x, system


def solve_model(cell: Cell, condense: bool = False, system: AssembledSystem | None = None) -> tuple[dict, np.ndarray]:
    """Model-problem solve, optionally through the static-condensation path.

    Returns the report row and the full global solution vector.
    """
    space = model_space(cell.continuity, cell.p, cell.h) if system is None else system.space
    if system is None:
        system = model_system(space)
    if not condense:
        row, x, _ = _solve_cell(cell, system)
        return row, full_solution(system, x)
    pc = PC_ALIASES[cell.pc]
    if pc in ("ebe", "bbb", "twogrid"):
        raise ValueError(f"preconditioner {pc!r} needs the full model system, not the skeleton")
    C = static_condense(space, system)
    sk = AssembledSystem(space, C.matrix, C.rhs, system.dirichlet_dofs, system.lift_values, C.skeleton)
    M = setup_preconditioner(pc, sk, omega=cell.omega, ssor_blocks=cell.ssor_blocks)
    xs, rep = pcg(C.matrix, C.rhs, M, rtol=cell.rtol, maxit=cell.maxit, norm=cell.norm)
    x = recover_interior(C, xs)
    row = {
        "space": Continuity.parse(cell.continuity).value, "p": cell.p, "h": format_h(cell.h), "pc": pc, "r": "",
        "iterations": rep.iterations if rep.converged else "DNC", "kappa": rep.kappa,
        "setup_flops": rep.setup_flops + C.flops.total(), "iterate_flops": rep.iterate_flops,
        "setup_s": rep.setup_seconds + C.seconds, "iterate_s": rep.iterate_seconds,
        "converged": rep.converged, "max_error": float(np.max(np.abs(x - 1.0))),
        "true_residual": rep.true_residual, "rhs_norm": rep.rhs_norm,
        "skeleton_n": C.n_skeleton,
    }
    return row, full_solution(system, x)


def iteration_sweep(continuities, ps, hs, pcs, r=None, omega: float = 1.0, rtol: float = 1e-8,
                    maxit: int | None = None, norm: str = "preconditioned", skip_inapplicable: bool = True,
                    progress=None, ssor_blocks: str = "point") -> list[dict]:
    """Grid of :func:`run_cell` rows; one assembly per (space, p, h).

    Cells that exceed ``maxit`` are kept with ``iterations == "DNC"``.
    """
    rows = []
    for cont in continuities:
        for p in ps:
            for h in hs:
                system = None
                for pc in pcs:
                    cell = Cell(cont, p, Fraction(h), PC_ALIASES[pc], r, omega, rtol, maxit, norm, ssor_blocks)
                    reason = cell.applicable()
                    if reason is not None:
                        if skip_inapplicable:
                            continue
                        raise ValueError(reason)
                    if system is None:
                        system = model_system(model_space(cont, p, h))
                    row = run_cell(cell, system)
                    rows.append(row)
                    if progress is not None:
                        progress(row)
                del system
    return rows


def _median_time(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernels_bench(p: int, n: int, reps: int = 5, seed: int = 0) -> list[dict]:
    """Kernel FLOPs and median wall time on periodic mass matrices at matched N.

    The C0 space has ``n/p`` elements per direction, the C^(p-1) space ``n``;
    both carry ``n^3`` DOFs.  ``ilu_estimate`` is the cost counter in the
    matrix's natural row order, ``ilu_estimate_lattice`` uses the
    translation-invariant lower/upper split of the periodic grid.
    """
    if n % p:
        raise ValueError(f"n = {n} is not divisible by p = {p}; C0 cannot match the DOF count")
    if reps < 1:
        raise ValueError("need at least one repetition")
    rng = np.random.default_rng(seed)
    rows = []
    for cont, ne in (("c0", n // p), ("cpm1", n)):
        space = make_space(p, ne, cont, periodic=True)
        A = assemble(space, "mass")
        x = rng.standard_normal(A.n_rows)
        per = {}
        f = FlopCounter()
        per["spmv"] = (_median_time(lambda: spmv(A, x, f), reps), f.total() // reps)
        f = FlopCounter()
        per["ssor"] = (_median_time(lambda: ssor_apply(A, x, 1.0, f), reps), f.total() // reps)
        holder = {}

        def factor():
            holder["F"] = ilu0_factor(A)

        t = _median_time(factor, reps)
        F = holder["F"]
        per["ilu_setup"] = (t, F.actual_flops)
        per["ilu_estimate"] = (math.nan, F.estimate_flops)
        per["ilu_estimate_lattice"] = (math.nan, ilu0_flop_estimate(A, lower=lattice_lower_mask(space, A)))
        f = FlopCounter()
        per["trisolve"] = (_median_time(lambda: ilu0_solve(F, x, f), reps), f.total() // reps)
        for kernel, (sec, flops) in per.items():
            rows.append({"space": cont, "p": p, "n": n, "N": A.n_rows, "nnz": A.nnz,
                         "kernel": kernel, "flops": int(flops), "seconds": sec})
    by = {(r["space"], r["kernel"]): r for r in rows}
    for kernel in per:
        c0, c1 = by[("c0", kernel)], by[("cpm1", kernel)]
        rows.append({"space": "ratio", "p": p, "n": n, "N": c0["N"], "nnz": c1["nnz"] / c0["nnz"],
                     "kernel": kernel, "flops": c1["flops"] / c0["flops"],
                     "seconds": c1["seconds"] / c0["seconds"] if c0["seconds"] > 0 else math.nan})
    return rows
