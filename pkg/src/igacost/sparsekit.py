"""CSR storage and FLOP-instrumented sparse kernels.

Every kernel that applies a matrix (matrix-vector product, SSOR sweep pair,
ILU(0) triangular solves) charges 2 FLOPs per stored nonzero, the usual
convention for comparing kernels across discretizations.  ILU(0) setup is
charged twice: once with the operations actually performed on the static
pattern, once with the estimate ``sum_i sum_{k in lower(i)} (1 + 2 U_k)``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numba
import numpy as np
import scipy.io
import scipy.sparse as sp

__all__ = [
    "CsrMatrix",
    "FlopCounter",
    "IluFactors",
    "ZeroPivotError",
    "spmv",
    "ssor_apply",
    "block_ssor_apply",
    "inode_blocks",
    "block_diagonal",
    "ilu0_factor",
    "ilu0_solve",
    "ilu0_flop_estimate",
    "kron_csr",
    "block_positions",
    "gather_blocks",
    "scatter_blocks",
    "read_matrix_market",
    "write_matrix_market",
]

KERNELS = (
    "spmv", "ssor", "ilu_setup", "ilu_estimate", "trisolve", "scale", "vector",
    "transfer", "coarse_solve", "dense_inversion",
)


class ZeroPivotError(ArithmeticError):
    """Raised when ILU(0) meets a (numerically) zero pivot."""

    def __init__(self, row: int, pivot: float):
        super().__init__(f"zero pivot {pivot:.3e} in row {row}")
        self.row = row
        self.pivot = pivot


@dataclass
class FlopCounter:
    """Monotone FLOP tallies keyed by kernel class."""

    counts: Counter = field(default_factory=Counter)

    def add(self, kind: str, n) -> None:
        if kind not in KERNELS:
            raise KeyError(f"unknown kernel class {kind!r}")
        self.counts[kind] += int(n)

    def __getitem__(self, kind: str) -> int:
        return self.counts[kind]

    def merge(self, other: "FlopCounter") -> "FlopCounter":
        self.counts.update(other.counts)
        return self

    def total(self, *kinds: str) -> int:
        kinds = kinds or tuple(k for k in KERNELS if k != "ilu_estimate")
        return sum(self.counts[k] for k in kinds)

    def copy(self) -> "FlopCounter":
        return FlopCounter(Counter(self.counts))


def _index_dtype(nnz: int, n: int):
    return np.int32 if max(nnz, n) < np.iinfo(np.int32).max else np.int64


class CsrMatrix:
    """Compressed sparse row matrix with strictly increasing columns per row.

    Arrays are not copied; treat instances as immutable once built.
    """

    def __init__(self, indptr, indices, data, shape, check: bool = True):
        n_rows, n_cols = int(shape[0]), int(shape[1])
        idt = _index_dtype(len(indices), max(n_rows, n_cols))
        self.indptr = np.asarray(indptr, dtype=idt)
        self.indices = np.asarray(indices, dtype=idt)
        self.data = np.asarray(data, dtype=np.float64)
        self.shape = (n_rows, n_cols)
        if check:
            self._validate()

    def _validate(self):
        ip, ind = self.indptr, self.indices
        if ip.shape != (self.shape[0] + 1,) or ip[0] != 0 or ip[-1] != len(ind):
            raise ValueError("inconsistent row offsets")
        if np.any(np.diff(ip) < 0):
            raise ValueError("row offsets must be nondecreasing")
        if len(ind) != len(self.data):
            raise ValueError("indices and data differ in length")
        if len(ind) and (ind.min() < 0 or ind.max() >= self.shape[1]):
            raise ValueError("column index out of range")
        if not _rows_sorted(ip, ind):
            raise ValueError("columns must be strictly increasing within each row")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    @property
    def n_rows(self) -> int:
        return self.shape[0]

    @property
    def n_cols(self) -> int:
        return self.shape[1]

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def diag_positions(self) -> np.ndarray:
        """Position of each row's diagonal entry in ``data`` (-1 if absent)."""
        return _diag_positions(self.indptr, self.indices)

    def diagonal(self) -> np.ndarray:
        pos = self.diag_positions
        d = np.zeros(self.n_rows)
        have = pos >= 0
        d[have] = self.data[pos[have]]
        return d

    def require_diagonal(self) -> np.ndarray:
        pos = self.diag_positions
        missing = np.flatnonzero(pos < 0)
        if missing.size:
            raise ValueError(f"row {missing[0]} has no stored diagonal entry")
        d = self.data[pos]
        zero = np.flatnonzero(d == 0.0)
        if zero.size:
            raise ZeroDivisionError(f"zero diagonal entry in row {zero[0]}")
        return d

    @cached_property
    def scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape, copy=False)

    def toarray(self) -> np.ndarray:
        return self.scipy.toarray()

    def with_data(self, data) -> "CsrMatrix":
        """Same pattern, new values."""
        return CsrMatrix(self.indptr, self.indices, data, self.shape, check=False)

    def max_asymmetry(self) -> float:
        S = self.scipy
        D = S - S.T
        return float(abs(D).max()) if D.nnz else 0.0

    def is_structurally_symmetric(self) -> bool:
        P = self.with_data(np.ones(self.nnz)).scipy
        return (P != P.T).nnz == 0

    @classmethod
    def from_scipy(cls, S) -> "CsrMatrix":
        S = sp.csr_matrix(S, copy=True)
        S.sum_duplicates()
        S.sort_indices()
        return cls(S.indptr, S.indices, S.data, S.shape)

    @classmethod
    def from_dense(cls, A, keep_zeros: bool = False) -> "CsrMatrix":
        A = np.asarray(A, dtype=float)
        if keep_zeros:
            mask = np.ones_like(A, dtype=bool)
        else:
            mask = A != 0
        rows, cols = np.nonzero(mask)
        indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))])
        return cls(indptr, cols, A[rows, cols], A.shape)

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n))

    def submatrix(self, rows, cols) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.scipy[rows][:, cols])

    def __repr__(self) -> str:
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


@numba.njit(cache=True)
def _rows_sorted(indptr, indices):
    for i in range(len(indptr) - 1):
        for jj in range(indptr[i] + 1, indptr[i + 1]):
            if indices[jj] <= indices[jj - 1]:
                return False
    return True


@numba.njit(cache=True)
def _diag_positions(indptr, indices):
    n = len(indptr) - 1
    pos = np.full(n, -1, np.int64)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        while lo < hi:
            mid = (lo + hi) // 2
            if indices[mid] < i:
                lo = mid + 1
            else:
                hi = mid
        if lo < indptr[i + 1] and indices[lo] == i:
            pos[i] = lo
    return pos


def _check_vector(A: CsrMatrix, x, n=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = A.n_cols if n is None else n
    if x.shape != (n,):
        raise ValueError(f"vector of length {x.shape} does not conform with matrix {A.shape}")
    return x


def _charge(flops, kind, n):
    if flops is not None:
        flops.add(kind, n)


def spmv(A: CsrMatrix, x, flops: FlopCounter | None = None) -> np.ndarray:
    """``y = A x``; charges ``2 nnz(A)`` FLOPs."""
    x = _check_vector(A, x)
    y = A.scipy @ x
    _charge(flops, "spmv", 2 * A.nnz)
    return y


@numba.njit(cache=True)
def _ssor_kernel(indptr, indices, data, diag_pos, r, omega):
    n = len(r)
    y = np.empty(n)
    for i in range(n):
        s = r[i]
        for jj in range(indptr[i], diag_pos[i]):
            s -= data[jj] * y[indices[jj]]
        y[i] = s * omega / data[diag_pos[i]]
    scale = (2.0 - omega) / omega
    for i in range(n):
        y[i] *= scale * data[diag_pos[i]]
    z = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for jj in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[jj] * z[indices[jj]]
        z[i] = s * omega / data[diag_pos[i]]
    return z


def ssor_apply(A: CsrMatrix, r, omega: float = 1.0, flops: FlopCounter | None = None) -> np.ndarray:
    """Apply ``M^{-1}`` with ``M = (D/w + L) (w/(2-w)) D^{-1} (D/w + U)``.

    Forward sweep in natural row order, diagonal scaling, backward sweep in
    reversed row order.
    """
    if A.n_rows != A.n_cols:
        raise ValueError("SSOR needs a square matrix")
    if not 0.0 < omega < 2.0:
        raise ValueError(f"relaxation parameter must lie in (0, 2), got {omega}")
    r = _check_vector(A, r)
    A.require_diagonal()
    z = _ssor_kernel(A.indptr, A.indices, A.data, A.diag_positions, r, float(omega))
    _charge(flops, "ssor", 2 * A.nnz)
    return z


def inode_blocks(A: CsrMatrix, limit: int = 5) -> np.ndarray:
    """Start offsets of runs of consecutive rows with identical column patterns.

    Runs are capped at ``limit`` rows.  Returns ``starts`` with
    ``starts[-1] == n``; block ``b`` holds rows ``starts[b]:starts[b+1]``.
    """
    if limit < 1:
        raise ValueError(f"block size limit must be positive, got {limit}")
    return _inode_kernel(A.indptr, A.indices, int(limit))


@numba.njit(cache=True)
def _inode_kernel(indptr, indices, limit):
    n = len(indptr) - 1
    starts = [0]
    a = 0
    for i in range(1, n + 1):
        same = i < n and i - a < limit and indptr[i + 1] - indptr[i] == indptr[a + 1] - indptr[a]
        if same:
            off = indptr[i] - indptr[a]
            for jj in range(indptr[a], indptr[a + 1]):
                if indices[jj] != indices[jj + off]:
                    same = False
                    break
        if not same:
            starts.append(i)
            a = i
    return np.array(starts, dtype=np.int64)


def block_diagonal(A: CsrMatrix, starts) -> np.ndarray:
    """Diagonal blocks on ``starts`` as an identity-padded ``(nb, m, m)`` array."""
    starts = np.asarray(starts, np.int64)
    sizes = np.diff(starts)
    m = int(sizes.max()) if sizes.size else 0
    col = np.arange(m)
    mask = col[None, :] < sizes[:, None]
    dofs = np.where(mask, starts[:-1, None] + col[None, :], -1)
    return gather_blocks(A, dofs)


@numba.njit(cache=True)
def _block_ssor_kernel(indptr, indices, data, starts, diag, inv, r, omega):
    n = len(r)
    nb = len(starts) - 1
    y = np.empty(n)
    s = np.empty(inv.shape[1])
    for b in range(nb):
        a, e = starts[b], starts[b + 1]
        for i in range(a, e):
            t = r[i]
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                if j >= a:
                    break
                t -= data[jj] * y[j]
            s[i - a] = t
        for i in range(a, e):
            t = 0.0
            for k in range(e - a):
                t += inv[b, i - a, k] * s[k]
            y[i] = omega * t
    scale = (2.0 - omega) / omega
    for b in range(nb):
        a, e = starts[b], starts[b + 1]
        for k in range(e - a):
            s[k] = y[a + k]
        for i in range(a, e):
            t = 0.0
            for k in range(e - a):
                t += diag[b, i - a, k] * s[k]
            y[i] = scale * t
    z = np.empty(n)
    for b in range(nb - 1, -1, -1):
        a, e = starts[b], starts[b + 1]
        for i in range(a, e):
            t = y[i]
            for jj in range(indptr[i + 1] - 1, indptr[i] - 1, -1):
                j = indices[jj]
                if j < e:
                    break
                t -= data[jj] * z[j]
            s[i - a] = t
        for i in range(a, e):
            t = 0.0
            for k in range(e - a):
                t += inv[b, i - a, k] * s[k]
            z[i] = omega * t
    return z


def block_ssor_apply(A: CsrMatrix, r, omega: float, starts, diag, inv, flops: FlopCounter | None = None) -> np.ndarray:
    """SSOR with ``D`` the block diagonal on ``starts``.

    ``diag`` and ``inv`` hold the padded diagonal blocks and their inverses.
    With unit blocks this is :func:`ssor_apply` up to rounding.  Charged as
    two sweeps over the off-block entries plus three block products.
    """
    if not 0.0 < omega < 2.0:
        raise ValueError(f"relaxation parameter must lie in (0, 2), got {omega}")
    r = _check_vector(A, r)
    z = _block_ssor_kernel(A.indptr, A.indices, A.data, np.asarray(starts, np.int64), diag, inv, r, float(omega))
    sizes = np.diff(starts)
    in_blocks = int(np.sum(sizes.astype(np.int64) ** 2))
    _charge(flops, "ssor", 2 * (A.nnz - in_blocks) + 6 * in_blocks)
    return z


@dataclass(frozen=True)
class IluFactors:
    """Combined ``L\\U`` storage on the pattern of the factored matrix.

    ``L`` is unit lower triangular (strict lower part of ``lu``), ``U`` is
    the upper part including the diagonal.
    """

    lu: CsrMatrix
    actual_flops: int
    estimate_flops: int

    @property
    def n(self) -> int:
        return self.lu.n_rows

    def lower(self) -> sp.csr_matrix:
        S = self.lu.scipy
        return (sp.tril(S, -1) + sp.identity(self.n)).tocsr()

    def upper(self) -> sp.csr_matrix:
        return sp.triu(self.lu.scipy).tocsr()


@numba.njit(cache=True)
def _ilu0_kernel(indptr, indices, data, diag_pos, tol):
    n = len(indptr) - 1
    a = data.copy()
    iw = np.full(n, -1, np.int64)
    actual = 0
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        rowmax = 0.0
        for jj in range(start, end):
            iw[indices[jj]] = jj
            v = abs(data[jj])
            if v > rowmax:
                rowmax = v
        for kk in range(start, diag_pos[i]):
            k = indices[kk]
            lik = a[kk] / a[diag_pos[k]]
            a[kk] = lik
            actual += 1
            for jj in range(diag_pos[k] + 1, indptr[k + 1]):
                pos = iw[indices[jj]]
                if pos != -1:
                    a[pos] -= lik * a[jj]
                    actual += 2
        for jj in range(start, end):
            iw[indices[jj]] = -1
        piv = a[diag_pos[i]]
        if abs(piv) < tol * rowmax or piv == 0.0:
            return a, actual, i
    return a, actual, -1


@numba.njit(cache=True)
def _ilu_estimate_kernel(indptr, indices, lower, diag_pos):
    n = len(indptr) - 1
    upper = np.zeros(n, np.int64)
    for k in range(n):
        for jj in range(indptr[k], indptr[k + 1]):
            if jj != diag_pos[k] and not lower[jj]:
                upper[k] += 1
    cost = np.zeros(n, np.int64)
    for i in range(n):
        c = 0
        for kk in range(indptr[i], indptr[i + 1]):
            if lower[kk]:
                c += 1 + 2 * upper[indices[kk]]
        cost[i] = c
    return cost


def ilu0_flop_estimate(A: CsrMatrix, per_row: bool = False, lower=None):
    """Estimated ILU(0) setup cost ``sum_{k in lower(i)} (1 + 2 U_k)``.

    ``U_k`` counts every strictly-upper entry of row ``k``, whether or not it
    falls inside row ``i``'s pattern.  Only the pattern of ``A`` is used.
    ``lower`` optionally marks which stored entries count as strictly lower
    (default: column < row); see :func:`igacost.space.lattice_lower_mask`
    for the translation-invariant split on periodic grids.
    """
    pos = A.diag_positions
    if np.any(pos < 0):
        raise ValueError("ILU(0) requires a stored diagonal in every row")
    if lower is None:
        rows = np.repeat(np.arange(A.n_rows), A.row_lengths())
        lower = A.indices < rows
    lower = np.ascontiguousarray(lower, dtype=np.bool_)
    if lower.shape != (A.nnz,):
        raise ValueError("lower mask must have one entry per stored value")
    cost = _ilu_estimate_kernel(A.indptr, A.indices, lower, pos)
    return cost if per_row else int(cost.sum())


def ilu0_factor(A: CsrMatrix, flops: FlopCounter | None = None, pivot_tol: float = 1e-14) -> IluFactors:
    """Zero fill-in incomplete LU by row-wise IKJ elimination on ``A``'s pattern."""
    if A.n_rows != A.n_cols:
        raise ValueError("ILU(0) needs a square matrix")
    pos = A.diag_positions
    if np.any(pos < 0):
        raise ValueError(f"row {int(np.flatnonzero(pos < 0)[0])} has no stored diagonal entry")
    lu, actual, bad = _ilu0_kernel(A.indptr, A.indices, A.data, pos, pivot_tol)
    if bad >= 0:
        raise ZeroPivotError(int(bad), float(lu[pos[bad]]))
    estimate = ilu0_flop_estimate(A)
    _charge(flops, "ilu_setup", actual)
    _charge(flops, "ilu_estimate", estimate)
    return IluFactors(A.with_data(lu), int(actual), int(estimate))


@numba.njit(cache=True)
def _trisolve_kernel(indptr, indices, a, diag_pos, r):
    n = len(r)
    y = np.empty(n)
    for i in range(n):
        s = r[i]
        for jj in range(indptr[i], diag_pos[i]):
            s -= a[jj] * y[indices[jj]]
        y[i] = s
    for i in range(n - 1, -1, -1):
        s = y[i]
        for jj in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= a[jj] * y[indices[jj]]
        y[i] = s / a[diag_pos[i]]
    return y


def ilu0_solve(F: IluFactors, r, flops: FlopCounter | None = None) -> np.ndarray:
    """``z = U^{-1} L^{-1} r``; charges ``2 nnz`` FLOPs."""
    lu = F.lu
    r = _check_vector(lu, r)
    z = _trisolve_kernel(lu.indptr, lu.indices, lu.data, lu.diag_positions, r)
    _charge(flops, "trisolve", 2 * lu.nnz)
    return z


# ----------------------------------------------------------------------------
# Tensor-product (Kronecker) CSR construction


@numba.njit(cache=True)
def _kron3_kernel(ipz, jz, ipy, jy, ipx, jx, vz, vy, vx, with_values, mx, my):
    nz = len(ipz) - 1
    ny = len(ipy) - 1
    nx = len(ipx) - 1
    nnz = len(jz) * len(jy) * len(jx)
    T = vz.shape[0]
    indptr = np.empty(nx * ny * nz + 1, np.int64)
    indices = np.empty(nnz, np.int64)
    data = np.zeros(nnz if with_values else 0)
    pos = 0
    row = 0
    indptr[0] = 0
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                for pz in range(ipz[iz], ipz[iz + 1]):
                    cz = jz[pz]
                    for py in range(ipy[iy], ipy[iy + 1]):
                        base = mx * (jy[py] + my * cz)
                        for px in range(ipx[ix], ipx[ix + 1]):
                            indices[pos] = jx[px] + base
                            if with_values:
                                s = 0.0
                                for t in range(T):
                                    s += vz[t, pz] * vy[t, py] * vx[t, px]
                                data[pos] = s
                            pos += 1
                row += 1
                indptr[row] = pos
    return indptr, indices, data


def kron_csr(factors, terms=None) -> CsrMatrix:
    """Assemble ``sum_t kron(Z_t, Y_t, X_t)`` directly in sorted CSR form.

    ``factors`` lists the 1D sparsity patterns in x, y, z order (one to three
    scipy CSR matrices, sorted indices); missing dimensions act as ``[[1]]``.
    ``terms`` is a list of ``(x_data, y_data, z_data)`` tuples, each array
    aligned with the stored entries of the matching pattern.  With
    ``terms=None`` only the pattern is built (ones as values).
    Row and column numbering is lexicographic with x fastest.
    """
    pats = [sp.csr_matrix(f) for f in factors]
    for P in pats:
        P.sort_indices()
    while len(pats) < 3:
        pats.append(sp.csr_matrix(np.ones((1, 1))))
    px, py, pz = pats
    if terms is None:
        vx = np.ones((1, px.nnz))
        vy = np.ones((1, py.nnz))
        vz = np.ones((1, pz.nnz))
        with_values = False
    else:
        terms = [tuple(t) + (np.ones(1),) * (3 - len(t)) for t in terms]
        vx = np.ascontiguousarray([np.asarray(t[0], float) for t in terms])
        vy = np.ascontiguousarray([np.asarray(t[1], float) for t in terms])
        vz = np.ascontiguousarray([np.asarray(t[2], float) for t in terms])
        with_values = True
    indptr, indices, data = _kron3_kernel(
        pz.indptr.astype(np.int64), pz.indices.astype(np.int64),
        py.indptr.astype(np.int64), py.indices.astype(np.int64),
        px.indptr.astype(np.int64), px.indices.astype(np.int64),
        vz, vy, vx, with_values, px.shape[1], py.shape[1],
    )
    n = (px.shape[0] * py.shape[0] * pz.shape[0], px.shape[1] * py.shape[1] * pz.shape[1])
    if not with_values:
        data = np.ones(len(indices))
    return CsrMatrix(indptr, indices, data, n, check=False)


# ----------------------------------------------------------------------------
# Dense principal blocks: gather from / scatter into a fixed CSR pattern


@numba.njit(cache=True)
def _block_positions_kernel(indptr, indices, dofs):
    nb, m = dofs.shape
    pos = np.full((nb, m, m), -1, np.int64)
    for b in range(nb):
        d = dofs[b]
        order = np.argsort(d)
        for a in range(m):
            row = d[a]
            if row < 0:
                continue
            ptr = indptr[row]
            end = indptr[row + 1]
            for t in range(m):
                c = order[t]
                col = d[c]
                if col < 0:
                    continue
                if ptr < end and indices[ptr] == col:
                    pos[b, a, c] = ptr
                    ptr += 1
                    continue
                lo, hi = ptr, end
                while lo < hi:
                    mid = (lo + hi) // 2
                    if indices[mid] < col:
                        lo = mid + 1
                    else:
                        hi = mid
                ptr = lo
                if lo < end and indices[lo] == col:
                    pos[b, a, c] = lo
                    ptr = lo + 1
    return pos


def block_positions(A: CsrMatrix, dofs) -> np.ndarray:
    """Positions in ``A.data`` of every entry of the principal blocks ``A[d, d]``.

    ``dofs`` is an ``(nb, m)`` integer array; negative entries mark padding.
    Entries outside the pattern (or touching padding) get position -1.
    """
    dofs = np.ascontiguousarray(dofs, dtype=np.int64)
    return _block_positions_kernel(A.indptr, A.indices, dofs)


def gather_blocks(A: CsrMatrix, dofs, positions=None, pad_identity: bool = True) -> np.ndarray:
    """Dense principal submatrices ``A[d, d]`` for each row ``d`` of ``dofs``.

    Padding slots (negative dofs) receive a unit diagonal so that padded
    blocks stay invertible and their inverses restrict exactly.
    """
    dofs = np.ascontiguousarray(dofs, dtype=np.int64)
    pos = block_positions(A, dofs) if positions is None else positions
    blocks = np.where(pos >= 0, A.data[np.maximum(pos, 0)], 0.0)
    if pad_identity:
        b, a = np.nonzero(dofs < 0)
        blocks[b, a, a] = 1.0
    return blocks


@numba.njit(cache=True)
def _scatter_kernel(out, pos, blocks, sign):
    nb, m, _ = pos.shape
    for b in range(nb):
        for i in range(m):
            for j in range(m):
                q = pos[b, i, j]
                if q >= 0:
                    out[q] += sign * blocks[b, i, j]


def scatter_blocks(out: np.ndarray, positions: np.ndarray, blocks: np.ndarray, sign: float = 1.0) -> None:
    """In-place ``out[pos] += sign * block`` for every valid position."""
    _scatter_kernel(out, positions, np.ascontiguousarray(blocks, dtype=np.float64), float(sign))


# ----------------------------------------------------------------------------
# Matrix Market


def write_matrix_market(path, A: CsrMatrix, symmetric: bool | None = None) -> None:
    """Write coordinate real Matrix Market (1-based); symmetric storage if exact."""
    if symmetric is None:
        symmetric = A.n_rows == A.n_cols and A.max_asymmetry() == 0.0
    scipy.io.mmwrite(path, A.scipy.tocoo(), symmetry="symmetric" if symmetric else "general")


def read_matrix_market(path) -> CsrMatrix:
    M = scipy.io.mmread(path)
    return CsrMatrix.from_scipy(sp.csr_matrix(M))
