"""Preconditioners for the model problem: Jacobi, SSOR, ILU(0), element-by-
element (EBE), basis-by-basis additive Schwarz (BBB) and a two-grid cycle.

Every preconditioner exposes ``apply(r) -> z = M^{-1} r``, keeps its setup
cost (``setup_flops``, ``setup_seconds``) and accumulates apply FLOPs into
its own :class:`~igacost.sparsekit.FlopCounter`.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .assembly import AssembledSystem
from .bspline import Continuity, prolongation_1d
from .space import Space, all_element_dofs, coarsen, pattern_1d
from .sparsekit import (
    CsrMatrix,
    FlopCounter,
    block_diagonal,
    block_positions,
    block_ssor_apply,
    gather_blocks,
    ilu0_factor,
    ilu0_solve,
    inode_blocks,
    kron_csr,
    scatter_blocks,
    spmv,
    ssor_apply,
)

__all__ = [
    "KINDS",
    "SSOR_BLOCKS",
    "Preconditioner",
    "IdentityPreconditioner",
    "JacobiPreconditioner",
    "SsorPreconditioner",
    "Ilu0Preconditioner",
    "BlockInversePreconditioner",
    "GridHierarchy",
    "TwoGridPreconditioner",
    "SingularBlockError",
    "setup_identity",
    "setup_jacobi",
    "setup_ssor",
    "setup_ilu0",
    "setup_ebe",
    "setup_bbb",
    "setup_twogrid",
    "setup_preconditioner",
    "apply",
]

KINDS = ("none", "jacobi", "ssor", "ilu0", "ebe", "bbb", "twogrid")


class SingularBlockError(np.linalg.LinAlgError):
    def __init__(self, index: int, what: str = "element"):
        super().__init__(f"extracted block of {what} {index} is not positive definite")
        self.index = index


class Preconditioner:
    """Base class; subclasses implement ``_apply``."""

    kind = "none"

    def __init__(self, n: int, setup_flops: int = 0, setup_seconds: float = 0.0):
        self.n = n
        self.setup_flops = int(setup_flops)
        self.setup_seconds = setup_seconds
        self.flops = FlopCounter()

    def apply(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape != (self.n,):
            raise ValueError(f"residual of shape {r.shape} does not match preconditioner size {self.n}")
        return self._apply(r)

    __call__ = apply

    def _apply(self, r):
        return r.copy()

    def as_dense(self) -> np.ndarray:
        """Explicit ``M^{-1}`` column by column (small problems only)."""
        return np.column_stack([self.apply(e) for e in np.eye(self.n)])

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, setup_flops={self.setup_flops})"


class IdentityPreconditioner(Preconditioner):
    kind = "none"


def setup_identity(A: CsrMatrix) -> IdentityPreconditioner:
    return IdentityPreconditioner(A.n_rows)


class JacobiPreconditioner(Preconditioner):
    kind = "jacobi"

    def __init__(self, inv_diag, **kw):
        super().__init__(len(inv_diag), **kw)
        self.inv_diag = inv_diag

    def _apply(self, r):
        self.flops.add("scale", self.n)
        return self.inv_diag * r


def setup_jacobi(A: CsrMatrix) -> JacobiPreconditioner:
    t0 = time.perf_counter()
    inv = 1.0 / A.require_diagonal()
    return JacobiPreconditioner(inv, setup_flops=A.n_rows, setup_seconds=time.perf_counter() - t0)


class SsorPreconditioner(Preconditioner):
    kind = "ssor"

    def __init__(self, A: CsrMatrix, omega: float, starts=None, diag=None, inv=None, **kw):
        super().__init__(A.n_rows, **kw)
        self.A = A
        self.omega = float(omega)
        self.starts, self.diag, self.inv = starts, diag, inv

    @property
    def blocks(self) -> str:
        return "point" if self.starts is None else "inode"

    def _apply(self, r):
        if self.starts is None:
            return ssor_apply(self.A, r, self.omega, self.flops)
        return block_ssor_apply(self.A, r, self.omega, self.starts, self.diag, self.inv, self.flops)


SSOR_BLOCKS = ("point", "inode")


def setup_ssor(A: CsrMatrix, omega: float = 1.0, blocks: str = "point", limit: int = 5) -> SsorPreconditioner:
    """Symmetric SOR with a pointwise or inode-blocked diagonal.

    ``blocks="inode"`` groups runs of up to ``limit`` consecutive rows with
    identical patterns and relaxes each group exactly.  Setup charges ``N``
    for the pointwise diagonal and ``2 m^3`` per block of size ``m > 1``.
    """
    t0 = time.perf_counter()
    if not 0.0 < omega < 2.0:
        raise ValueError(f"relaxation parameter must lie in (0, 2), got {omega}")
    if blocks not in SSOR_BLOCKS:
        raise ValueError(f"unknown SSOR blocking {blocks!r}; choose from {SSOR_BLOCKS}")
    A.require_diagonal()
    _ = A.diag_positions
    if blocks == "point":
        return SsorPreconditioner(A, omega, setup_flops=A.n_rows, setup_seconds=time.perf_counter() - t0)
    starts = inode_blocks(A, limit)
    diag = block_diagonal(A, starts)
    inv = np.linalg.inv(diag)
    sizes = np.diff(starts)
    cost = int(np.where(sizes > 1, 2 * sizes.astype(np.int64) ** 3, 1).sum())
    return SsorPreconditioner(A, omega, starts, diag, inv, setup_flops=cost, setup_seconds=time.perf_counter() - t0)


class Ilu0Preconditioner(Preconditioner):
    kind = "ilu0"

    def __init__(self, factors, **kw):
        super().__init__(factors.n, **kw)
        self.factors = factors
        self.estimate_flops = factors.estimate_flops

    def _apply(self, r):
        return ilu0_solve(self.factors, r, self.flops)


def setup_ilu0(A: CsrMatrix) -> Ilu0Preconditioner:
    t0 = time.perf_counter()
    F = ilu0_factor(A)
    return Ilu0Preconditioner(F, setup_flops=F.actual_flops, setup_seconds=time.perf_counter() - t0)


class BlockInversePreconditioner(Preconditioner):
    """``M^{-1} = sum_i R_i^T A_i^{-1} R_i`` stored as one assembled matrix."""

    def __init__(self, kind: str, B: CsrMatrix, n_blocks: int, **kw):
        super().__init__(B.n_rows, **kw)
        self.kind = kind
        self.matrix = B
        self.n_blocks = n_blocks

    def _apply(self, r):
        return spmv(self.matrix, r, self.flops)


def _invert_spd_blocks(blocks: np.ndarray, first_index: int, what: str) -> np.ndarray:
    if blocks.shape[1] == 1:
        # scalar blocks: plain reciprocal, bitwise equal to the Jacobi payload
        bad = np.flatnonzero(~(blocks[:, 0, 0] > 0))
        if bad.size:
            raise SingularBlockError(first_index + int(bad[0]), what)
        return 1.0 / blocks
    out = np.empty_like(blocks)
    for b in range(blocks.shape[0]):
        c, info = lapack.dpotrf(blocks[b], lower=0)
        if info != 0:
            raise SingularBlockError(first_index + b, what)
        inv, info = lapack.dpotri(c, lower=0)
        if info != 0:
            raise SingularBlockError(first_index + b, what)
        out[b] = np.triu(inv) + np.triu(inv, 1).T
    return out


def _assemble_block_inverse(A: CsrMatrix, B: CsrMatrix, dofs: np.ndarray, what: str, batch: int):
    """Scatter-add inverted principal blocks of ``A`` into the pattern of ``B``."""
    data = np.zeros(B.nnz)
    flops = 0
    for start in range(0, dofs.shape[0], batch):
        d = dofs[start:start + batch]
        pos_a = block_positions(A, d)
        blocks = gather_blocks(A, d, pos_a)
        inv = _invert_spd_blocks(blocks, start, what)
        pos_b = pos_a if B is A else block_positions(B, d)
        scatter_blocks(data, pos_b, inv)
        sizes = np.count_nonzero(d >= 0, axis=1).astype(np.int64)
        flops += int(np.sum(2 * sizes**3))
    return B.with_data(data), flops


def _dof_map(space: Space, n: int, retained_to_full) -> np.ndarray:
    """Global DOF -> row of ``A`` (or -1 for eliminated DOFs)."""
    if retained_to_full is None:
        if n != space.N:
            raise ValueError("matrix size differs from space size; pass retained_to_full")
        return np.arange(space.N)
    to_row = np.full(space.N, -1, np.int64)
    to_row[np.asarray(retained_to_full)] = np.arange(len(retained_to_full))
    return to_row


def setup_ebe(A: CsrMatrix, space: Space, retained_to_full=None, batch: int = 256) -> BlockInversePreconditioner:
    """Element-by-element preconditioner from principal blocks of the assembled ``A``."""
    t0 = time.perf_counter()
    to_row = _dof_map(space, A.n_rows, retained_to_full)
    dofs = to_row[all_element_dofs(space)]
    B, flops = _assemble_block_inverse(A, A, dofs, "element", batch)
    return BlockInversePreconditioner("ebe", B, space.N_e, setup_flops=flops,
                                      setup_seconds=time.perf_counter() - t0)


def _tensor_factors(space: Space, to_row: np.ndarray):
    """Per-direction kept indices if the retained set is a tensor product."""
    kept = np.flatnonzero(to_row >= 0)
    idx = space.grid_index(kept)
    per_dim = [np.unique(i) for i in idx]
    if math.prod(len(k) for k in per_dim) != kept.size:
        return None
    return per_dim


def _band_pattern_1d(n: int, width: int, periodic: bool) -> sp.csr_matrix:
    i = np.arange(n)
    d = np.abs(i[:, None] - i[None, :])
    if periodic:
        d = np.minimum(d, n - d)
    return sp.csr_matrix((d <= width).astype(float))


def _bbb_pattern(space: Space, r: int, to_row: np.ndarray, n_rows: int) -> CsrMatrix:
    per_dim = _tensor_factors(space, to_row)
    pats = [_band_pattern_1d(kv.n_dofs, 2 * r, kv.periodic) for kv in space.kvs]
    if per_dim is not None:
        pats = [P[k][:, k] for P, k in zip(pats, per_dim)]
        return kron_csr(pats)
    full = kron_csr(pats)
    rows = np.flatnonzero(to_row >= 0)
    S = full.scipy[rows][:, rows]
    return CsrMatrix.from_scipy(S)


def _bbb_windows(space: Space, r: int, to_row: np.ndarray) -> np.ndarray:
    """Overlap-``r`` window of every retained basis, in row numbering (-1 pads)."""
    rows = np.flatnonzero(to_row >= 0)
    centre = space.grid_index(rows)
    offs = np.arange(-r, r + 1)
    per_dim = []
    for kv, c in zip(space.kvs, centre):
        w = np.asarray(c)[:, None] + offs[None, :]
        if kv.periodic:
            valid = np.ones_like(w, dtype=bool)
            w %= kv.n_dofs
        else:
            valid = (w >= 0) & (w < kv.n_dofs)
            w = np.clip(w, 0, kv.n_dofs - 1)
        per_dim.append((w, valid))
    k = 2 * r + 1
    dim = space.dim
    g = np.zeros((rows.size,) + (1,) * dim, dtype=np.int64)
    ok = np.ones((rows.size,) + (1,) * dim, dtype=bool)
    stride = 1
    for d, (w, valid) in enumerate(per_dim):
        shape = [rows.size] + [1] * dim
        shape[dim - d] = k
        g = g + w.reshape(shape) * stride
        ok = ok & valid.reshape(shape)
        stride *= space.dof_shape[d]
    g = g.reshape(rows.size, -1)
    ok = ok.reshape(rows.size, -1)
    win = np.where(ok, to_row[g], -1)
    return win


def setup_bbb(A: CsrMatrix, space: Space, r: int, retained_to_full=None, batch: int = 256) -> BlockInversePreconditioner:
    """Basis-by-basis additive Schwarz with overlap ``r`` (C^(p-1) spaces).

    Subdomain ``i`` holds every basis within Chebyshev index distance ``r``
    of basis ``i``; windows are truncated at open boundaries and wrap on
    periodic ones.  ``r = 0`` is Jacobi.
    """
    p = space.degree
    if space.continuity is not Continuity.CPM1 and p > 1:
        raise ValueError("BBB is defined for C^(p-1) spaces")
    if int(r) != r or not 0 <= r <= p:
        raise ValueError(f"overlap r must satisfy 0 <= r <= p={p}, got {r!r}")
    r = int(r)
    t0 = time.perf_counter()
    to_row = _dof_map(space, A.n_rows, retained_to_full)
    B = _bbb_pattern(space, r, to_row, A.n_rows)
    win = _bbb_windows(space, r, to_row)
    M, flops = _assemble_block_inverse(A, B, win, "basis", batch)
    P = BlockInversePreconditioner("bbb", M, A.n_rows, setup_flops=flops,
                                   setup_seconds=time.perf_counter() - t0)
    P.overlap = r
    return P


# ----------------------------------------------------------------------------
# Two-grid


class _CoarseSolver:
    """Direct solver for the coarse operator (sparse LU, dense Cholesky if tiny)."""

    dense_limit = 2000

    def __init__(self, Ac: CsrMatrix):
        n = Ac.n_rows
        self.n = n
        if n <= self.dense_limit:
            self.dense = scipy.linalg.cho_factor(Ac.toarray())
            self.lu = None
            self.solve_flops = 2 * n * n
            self.factor_flops = n**3 // 3
        else:
            self.dense = None
            self.lu = spla.splu(Ac.scipy.tocsc(), permc_spec="MMD_AT_PLUS_A")
            fill = self.lu.L.nnz + self.lu.U.nnz
            self.solve_flops = 2 * fill
            self.factor_flops = 0

    def solve(self, b):
        if self.dense is not None:
            return scipy.linalg.cho_solve(self.dense, b)
        return self.lu.solve(b)


@dataclass
class GridHierarchy:
    fine: Space
    coarse: Space
    prolongation: CsrMatrix
    coarse_matrix: CsrMatrix


def _restricted_prolongation(fine: Space, coarse: Space):
    out = []
    for kf, kc in zip(fine.kvs, coarse.kvs):
        P = prolongation_1d(kc, kf)
        out.append(P[1:, 1:])
    return out


def _galerkin_1d(P: np.ndarray, M: np.ndarray) -> np.ndarray:
    G = P.T @ M @ P
    return np.triu(G) + np.triu(G, 1).T


def build_hierarchy(system: AssembledSystem) -> GridHierarchy:
    """Coarse space (half the elements), prolongation and Galerkin operator.

    For the model problem the fine operator is a sum of Kronecker products,
    so ``P^T A P`` factorizes direction by direction.
    """
    fine = system.space
    if fine.periodic:
        raise ValueError("two-grid is implemented for the (open) model problem")
    coarse = coarsen(fine)
    P1 = _restricted_prolongation(fine, coarse)
    P1_csr = [sp.csr_matrix(P) for P in P1]
    for P in P1_csr:
        P.sort_indices()
    P = kron_csr(P1_csr, [tuple(Q.data for Q in P1_csr)])
    n_f, n_c = P.shape
    if n_f != system.n:
        raise ValueError("system is not the Dirichlet-reduced model problem of its space")
    if system.factors is not None:
        keep = [np.arange(1, kv.n_dofs) for kv in coarse.kvs]
        pats = [pattern_1d(kv)[k][:, k] for kv, k in zip(coarse.kvs, keep)]
        for S in pats:
            S.sort_indices()
        mats = {}
        for which in ("mass", "stiffness"):
            mats[which] = [_galerkin_1d(Pd, getattr(f, which)) for Pd, f in zip(P1, system.factors)]

        def on_pattern(D, S):
            C = S.tocoo()
            return D[C.row, C.col]

        dim = fine.dim
        if system.operator == "mass":
            kinds = [["mass"] * dim]
        else:
            kinds = [["stiffness" if k == d else "mass" for k in range(dim)] for d in range(dim)]
        terms = [tuple(on_pattern(mats[w][d], pats[d]) for d, w in enumerate(kind)) for kind in kinds]
        Ac = kron_csr(pats, terms)
    else:
        S = P.scipy.T @ system.matrix.scipy @ P.scipy
        S = 0.5 * (S + S.T)
        Ac = CsrMatrix.from_scipy(S)
    return GridHierarchy(fine, coarse, P, Ac)


class TwoGridPreconditioner(Preconditioner):
    """Symmetric two-grid cycle.

    ``steps`` Richardson steps with ``smoother`` before and after an exact
    coarse-grid correction ``P Ac^{-1} P^T``.  With ``smoother=None`` only
    the coarse correction is applied.
    """

    kind = "twogrid"

    def __init__(self, A: CsrMatrix, P: CsrMatrix, coarse_matrix: CsrMatrix,
                 smoother: Preconditioner | None = None, steps: int = 1, **kw):
        super().__init__(A.n_rows, **kw)
        self.A = A
        self.P = P
        self.coarse_matrix = coarse_matrix
        self.smoother = smoother
        self.steps = int(steps)
        self.coarse = _CoarseSolver(coarse_matrix)
        self.PT = P.scipy.T.tocsr()
        if smoother is not None:
            smoother.flops = self.flops

    def _smooth(self, r, x):
        for _ in range(self.steps):
            if x is None:
                x = self.smoother.apply(r)
            else:
                x = x + self.smoother.apply(r - spmv(self.A, x, self.flops))
        return x

    def _apply(self, r):
        x = None
        if self.smoother is not None:
            x = self._smooth(r, None)
            res = r - spmv(self.A, x, self.flops)
        else:
            res = r
        rc = self.PT @ res
        ec = self.coarse.solve(rc)
        corr = self.P.scipy @ ec
        self.flops.add("transfer", 4 * self.P.nnz)
        self.flops.add("coarse_solve", self.coarse.solve_flops)
        x = corr if x is None else x + corr
        if self.smoother is not None:
            x = self._smooth(r, x)
        return x



def setup_twogrid(system: AssembledSystem, space: Space | None = None, steps: int = 1) -> TwoGridPreconditioner:
    """Two-grid preconditioner with ILU(0) smoothing and a direct coarse solve."""
    t0 = time.perf_counter()
    if space is not None and space is not system.space:
        raise ValueError("space does not match the system")
    H = build_hierarchy(system)
    smoother = setup_ilu0(system.matrix)
    P = TwoGridPreconditioner(system.matrix, H.prolongation, H.coarse_matrix, smoother, steps)
    P.hierarchy = H
    P.setup_flops = smoother.setup_flops + P.coarse.factor_flops
    P.setup_seconds = time.perf_counter() - t0
    return P


def setup_preconditioner(kind: str, system: AssembledSystem, omega: float = 1.0, r: int | None = None,
                         steps: int = 1, ssor_blocks: str = "point") -> Preconditioner:
    """Build any preconditioner of :data:`KINDS` for an assembled system."""
    A = system.matrix
    if kind in ("ilu", "ilu0"):
        return setup_ilu0(A)
    if kind == "none":
        return setup_identity(A)
    if kind == "jacobi":
        return setup_jacobi(A)
    if kind == "ssor":
        return setup_ssor(A, omega, ssor_blocks)
    if kind == "ebe":
        return setup_ebe(A, system.space, system.retained_to_full)
    if kind == "bbb":
        if r is None:
            r = system.space.degree // 2
        return setup_bbb(A, system.space, r, system.retained_to_full)
    if kind == "twogrid":
        return setup_twogrid(system, steps=steps)
    raise ValueError(f"unknown preconditioner kind {kind!r}; choose from {KINDS}")


def apply(P: Preconditioner, r) -> np.ndarray:
    """``z = M^{-1} r`` for any preconditioner."""
    return P.apply(r)
