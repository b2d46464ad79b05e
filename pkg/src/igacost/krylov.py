"""Preconditioned conjugate gradients with Lanczos eigenvalue estimates."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .precond import IdentityPreconditioner, Preconditioner
from .sparsekit import CsrMatrix, FlopCounter, spmv

__all__ = ["SolveReport", "BreakdownError", "pcg", "estimate_extremes", "lanczos_tridiagonal", "default_maxit"]


class BreakdownError(ArithmeticError):
    """``<z, r> <= 0`` during CG: the preconditioner is not positive definite."""


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    residual_history: np.ndarray
    true_residual: float
    rhs_norm: float
    setup_flops: int = 0
    iterate_flops: int = 0
    setup_seconds: float = 0.0
    iterate_seconds: float = 0.0
    alphas: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    betas: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    eig_min: float = math.nan
    eig_max: float = math.nan
    flops: FlopCounter = field(default_factory=FlopCounter, repr=False)

    @property
    def kappa(self) -> float:
        return self.eig_max / self.eig_min if self.eig_min > 0 else math.nan

    @property
    def relative_residual(self) -> float:
        h = self.residual_history
        return float(h[-1] / h[0]) if len(h) and h[0] > 0 else 0.0


def default_maxit(n: int) -> int:
    return int(10 * math.sqrt(n) + 100)


def pcg(A: CsrMatrix, b, M: Preconditioner | None = None, rtol: float = 1e-8, maxit: int | None = None,
        norm: str = "preconditioned"):
    """Solve ``A x = b`` by PCG from ``x0 = 0``.

    Stops when ``||z_k|| / ||z_0|| <= rtol`` with ``z = M^{-1} r``
    (``norm="preconditioned"``) or when ``sqrt(<z_k, r_k>)`` has dropped by
    ``rtol`` (``norm="natural"``).  Exceeding ``maxit`` returns the last
    iterate with ``converged=False``.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    if norm not in ("preconditioned", "natural"):
        raise ValueError(f"unknown convergence norm {norm!r}")
    b = np.asarray(b, dtype=float)
    n = A.n_rows
    if b.shape != (n,):
        raise ValueError(f"rhs of shape {b.shape} does not match matrix of size {n}")
    if not np.all(np.isfinite(b)):
        raise ValueError("rhs contains non-finite values")
    M = IdentityPreconditioner(n) if M is None else M
    maxit = default_maxit(n) if maxit is None else int(maxit)

    flops = FlopCounter()
    before = M.flops.copy()
    t0 = time.perf_counter()
    x = np.zeros(n)
    r = b.copy()
    z = M.apply(r)
    rz = float(r @ z)

    def measure(z, rz):
        return float(np.linalg.norm(z)) if norm == "preconditioned" else math.sqrt(max(rz, 0.0))

    history = [measure(z, rz)]
    alphas, betas = [], []
    converged = history[0] == 0.0
    if rz < 0:
        raise BreakdownError(f"<z, r> = {rz:.3e} < 0 at start")
    p = z.copy()
    k = 0
    while not converged and k < maxit:
        q = spmv(A, p, flops)
        pq = float(p @ q)
        if pq <= 0:
            raise BreakdownError(f"<p, Ap> = {pq:.3e} <= 0 at iteration {k}: matrix not SPD")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = M.apply(r)
        rz_new = float(r @ z)
        flops.add("vector", 10 * n)
        k += 1
        alphas.append(alpha)
        history.append(measure(z, rz_new))
        if history[-1] <= rtol * history[0]:
            converged = True
            betas.append(rz_new / rz if rz_new > 0 else 0.0)
            break
        if rz_new <= 0:
            raise BreakdownError(f"<z, r> = {rz_new:.3e} <= 0 at iteration {k}: preconditioner not SPD")
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        flops.add("vector", 2 * n)
        rz = rz_new
    seconds = time.perf_counter() - t0

    applied = M.flops.copy()
    for key, v in before.counts.items():
        applied.counts[key] -= v
    flops.merge(applied)
    true_res = float(np.linalg.norm(b - A.scipy @ x))
    report = SolveReport(
        iterations=k,
        converged=converged,
        residual_history=np.asarray(history),
        true_residual=true_res,
        rhs_norm=float(np.linalg.norm(b)),
        setup_flops=M.setup_flops,
        iterate_flops=flops.total(),
        setup_seconds=M.setup_seconds,
        iterate_seconds=seconds,
        alphas=np.asarray(alphas),
        betas=np.asarray(betas),
        flops=flops,
    )
    if k >= 1:
        report.eig_min, report.eig_max = _extremes(report.alphas, report.betas)
    return x, report


def lanczos_tridiagonal(alphas, betas):
    """Diagonal and off-diagonal of the Lanczos matrix implied by CG.

    ``T[k, k] = 1/a_k + b_{k-1}/a_{k-1}`` and ``T[k, k+1] = sqrt(b_k)/a_k``.
    """
    a = np.asarray(alphas, float)
    b = np.asarray(betas, float)[: len(a)]
    m = len(a)
    diag = 1.0 / a
    diag[1:] += b[: m - 1] / a[: m - 1]
    off = np.sqrt(b[: m - 1]) / a[: m - 1]
    return diag, off


def _extremes(alphas, betas):
    d, e = lanczos_tridiagonal(alphas, betas)
    if len(d) == 1:
        return float(d[0]), float(d[0])
    w = scipy.linalg.eigvalsh_tridiagonal(d, e)
    return float(w[0]), float(w[-1])


def estimate_extremes(report: SolveReport, min_iterations: int = 3):
    """``(eig_min, eig_max)`` of the preconditioned operator from CG coefficients."""
    if report.iterations < min_iterations:
        raise ValueError(f"need at least {min_iterations} CG iterations, got {report.iterations}")
    return _extremes(report.alphas, report.betas)
