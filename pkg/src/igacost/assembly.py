"""Galerkin mass/stiffness assembly on the unit cube, Dirichlet reduction for
the mixed Laplace model problem, and static condensation of C0 interiors.

On the identity geometry every tensor-product integrand separates, so the
3D operators are sums of Kronecker products of 1D Gauss-quadrature matrices:
``mass = Mz (x) My (x) Mx`` and
``stiffness = Kz (x) My (x) Mx + Mz (x) Ky (x) Mx + Mz (x) My (x) Kx``.
:func:`assemble` builds them that way; :func:`assemble_reference` keeps a
plain element-loop assembler with 3D quadrature for cross-checking.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bspline import Continuity, KnotVector, eval_basis, gauss_rule
from .space import Space, all_element_dofs, build_pattern, element_dofs, pattern_1d
from .sparsekit import CsrMatrix, FlopCounter, block_positions, gather_blocks, kron_csr, scatter_blocks

__all__ = [
    "OPERATORS",
    "LocalMatrix",
    "AssembledSystem",
    "CondensedSystem",
    "matrices_1d",
    "local_matrix",
    "assemble",
    "assemble_reference",
    "apply_model_bcs",
    "model_system",
    "unconstrained_system",
    "full_solution",
    "static_condense",
    "recover_interior",
]

OPERATORS = ("stiffness", "mass")


def _check_operator(operator: str) -> str:
    if operator not in OPERATORS:
        raise ValueError(f"operator must be one of {OPERATORS}, got {operator!r}")
    return operator


def _quadrature(kv: KnotVector, q: int | None):
    return gauss_rule(kv.degree + 1 if q is None else q)


def local_matrices_1d(kv: KnotVector, element: int, q: int | None = None):
    """1D element mass and stiffness matrices (exactly symmetric)."""
    rule = _quadrature(kv, q)
    B = eval_basis(kv, element, rule.points)
    wj = rule.weights * (0.5 * kv.element_size)
    M = np.einsum("q,qa,qb->ab", wj, B.values, B.values)
    K = np.einsum("q,qa,qb->ab", wj, B.derivatives, B.derivatives)
    return _mirror(M), _mirror(K)


def _mirror(A: np.ndarray) -> np.ndarray:
    return np.triu(A) + np.triu(A, 1).T


def matrices_1d(kv: KnotVector, q: int | None = None):
    """Dense 1D mass and stiffness matrices for a knot vector."""
    n = kv.n_dofs
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    for e in range(kv.n_elements):
        me, ke = local_matrices_1d(kv, e, q)
        idx = kv.element_dofs(e)
        np.add.at(M, (idx[:, None], idx[None, :]), me)
        np.add.at(K, (idx[:, None], idx[None, :]), ke)
    return _mirror(M), _mirror(K)


@dataclass(frozen=True)
class _Factors1D:
    """Per-direction 1D operators sharing one sparsity pattern."""

    pattern: sp.csr_matrix
    mass: np.ndarray
    stiffness: np.ndarray

    def data(self, which: str) -> np.ndarray:
        dense = self.mass if which == "mass" else self.stiffness
        P = self.pattern.tocoo()
        order = np.lexsort((P.col, P.row))
        return dense[P.row[order], P.col[order]]

    def restrict(self, keep: np.ndarray) -> "_Factors1D":
        P = self.pattern[keep][:, keep].tocsr()
        P.sort_indices()
        return _Factors1D(P, self.mass[np.ix_(keep, keep)], self.stiffness[np.ix_(keep, keep)])

    def matrix(self, which: str) -> sp.csr_matrix:
        return sp.csr_matrix((self.data(which), self.pattern.indices, self.pattern.indptr), shape=self.pattern.shape)


def _factors(space: Space, q: int | None = None) -> list[_Factors1D]:
    out = []
    for kv in space.kvs:
        M, K = matrices_1d(kv, q)
        out.append(_Factors1D(pattern_1d(kv), M, K))
    return out


def _terms(operator: str, factors: list[_Factors1D]):
    dim = len(factors)
    if operator == "mass":
        return [tuple(f.data("mass") for f in factors)]
    terms = []
    for d in range(dim):
        terms.append(tuple(f.data("stiffness" if k == d else "mass") for k, f in enumerate(factors)))
    return terms


def _kron_from_factors(operator: str, factors: list[_Factors1D]) -> CsrMatrix:
    return kron_csr([f.pattern for f in factors], _terms(operator, factors))


def assemble(space: Space, operator: str = "stiffness", q: int | None = None) -> CsrMatrix:
    """Assemble ``int grad Ni . grad Nj`` or ``int Ni Nj`` on the unit cube.

    The pattern is exactly :func:`build_pattern` and the matrix is bitwise
    symmetric.
    """
    _check_operator(operator)
    return _kron_from_factors(operator, _factors(space, q))


@dataclass(frozen=True)
class LocalMatrix:
    element: tuple
    dofs: np.ndarray
    values: np.ndarray


def local_matrix(space: Space, element, operator: str = "stiffness", q: int | None = None) -> LocalMatrix:
    """Element matrix from tensorized Gauss quadrature in all directions."""
    _check_operator(operator)
    element = space.element_index(element)
    tables, weights = [], []
    for kv, e in zip(space.kvs, element):
        rule = _quadrature(kv, q)
        tables.append(eval_basis(kv, e, rule.points))
        weights.append(rule.weights * 0.5 * kv.element_size)
    dim = space.dim
    # values/derivatives on the tensor grid of quadrature points (z, y, x order)
    n_loc = space.dofs_per_element
    W = weights[0]
    for w in weights[1:]:
        W = np.multiply.outer(w, W)
    W = W.reshape(-1)

    def tensor(kinds):
        out = None
        for d in reversed(range(dim)):
            f = tables[d].derivatives if kinds[d] else tables[d].values
            out = f if out is None else np.einsum("pa,qb->pqab", out, f).reshape(out.shape[0] * f.shape[0], -1)
        return out

    if operator == "mass":
        B = tensor([False] * dim)
        Ae = np.einsum("q,qa,qb->ab", W, B, B)
    else:
        Ae = np.zeros((n_loc, n_loc))
        for d in range(dim):
            G = tensor([k == d for k in range(dim)])
            Ae += np.einsum("q,qa,qb->ab", W, G, G)
    return LocalMatrix(element, element_dofs(space, element), _mirror(Ae))


def assemble_reference(space: Space, operator: str = "stiffness", q: int | None = None) -> CsrMatrix:
    """Element-by-element assembly (slow; for verification on small grids).

    Only pairs with ``row <= col`` are accumulated; the lower triangle is a
    mirror image, so the result is exactly symmetric.
    """
    rows, cols, vals = [], [], []
    for e in range(space.N_e):
        lm = local_matrix(space, e, operator, q)
        r = np.repeat(lm.dofs, lm.dofs.size)
        c = np.tile(lm.dofs, lm.dofs.size)
        keep = r <= c
        rows.append(r[keep])
        cols.append(c[keep])
        vals.append(lm.values.ravel()[keep])
    U = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(space.N, space.N)).tocsr()
    U.sum_duplicates()
    U = U.tocoo()
    off = U.row != U.col
    full = sp.coo_matrix(
        (np.r_[U.data, U.data[off]], (np.r_[U.row, U.col[off]], np.r_[U.col, U.row[off]])),
        shape=U.shape,
    )
    return CsrMatrix.from_scipy(full)


@dataclass
class AssembledSystem:
    """Dirichlet-reduced linear system ``matrix @ x = rhs``.

    ``retained_to_full[i]`` maps reduced unknown ``i`` to its global DOF.
    """

    space: Space
    matrix: CsrMatrix
    rhs: np.ndarray
    dirichlet_dofs: np.ndarray
    lift_values: np.ndarray
    retained_to_full: np.ndarray
    operator: str = "stiffness"
    factors: list | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.n_rows

    @property
    def n_full(self) -> int:
        return self.space.N


def _dirichlet_split(space: Space):
    idx = space.grid_index(np.arange(space.N))
    on_face = np.zeros(space.N, dtype=bool)
    for i in idx:
        on_face |= np.asarray(i) == 0
    return np.flatnonzero(on_face), np.flatnonzero(~on_face)


def apply_model_bcs(space: Space, A: CsrMatrix) -> AssembledSystem:
    """Impose ``u = 1`` on the x=0, y=0, z=0 faces by symmetric elimination.

    The Dirichlet set is the first index layer in each direction (the only
    open-vector functions nonzero on those faces); the remaining faces carry
    the natural homogeneous Neumann condition.
    """
    if space.periodic:
        raise ValueError("the model problem is posed on an open (non-periodic) space")
    dirichlet, retained = _dirichlet_split(space)
    lift = np.ones(dirichlet.size)
    S = A.scipy
    Arr = CsrMatrix.from_scipy(S[retained][:, retained])
    rhs = -(S[retained][:, dirichlet] @ lift)
    return AssembledSystem(space, Arr, rhs, dirichlet, lift, retained)


def model_system(space: Space, operator: str = "stiffness", q: int | None = None) -> AssembledSystem:
    """The model problem assembled directly in reduced Kronecker form.

    Equivalent to ``apply_model_bcs(space, assemble(space))`` without ever
    forming the full matrix.
    """
    _check_operator(operator)
    if space.periodic:
        raise ValueError("the model problem is posed on an open (non-periodic) space")
    full = _factors(space, q)
    keep = [np.arange(1, kv.n_dofs) for kv in space.kvs]
    reduced = [f.restrict(k) for f, k in zip(full, keep)]
    A = _kron_from_factors(operator, reduced)

    # A_full @ g with g = 1 - (r (x) r (x) r), r the retained indicator; terms act per direction
    dirichlet, retained = _dirichlet_split(space)
    ones = [np.ones(kv.n_dofs) for kv in space.kvs]
    ind = [np.r_[0.0, np.ones(kv.n_dofs - 1)] for kv in space.kvs]
    kinds = [["mass"] * space.dim] if operator == "mass" else [
        ["stiffness" if k == d else "mass" for k in range(space.dim)] for d in range(space.dim)
    ]
    Ag = 0.0
    for kind in kinds:
        mats = [getattr(f, w) for f, w in zip(full, kind)]
        a = _outer([m @ v for m, v in zip(mats, ones)])
        b = _outer([m @ v for m, v in zip(mats, ind)])
        Ag = Ag + (a - b)
    rhs = -np.asarray(Ag).reshape(-1)[retained]
    return AssembledSystem(space, A, rhs, dirichlet, np.ones(dirichlet.size), retained,
                           operator=operator, factors=reduced)


def _outer(vecs) -> np.ndarray:
    """Tensor product of per-direction vectors flattened x-fastest."""
    out = np.ones(1)
    for v in vecs:
        out = np.multiply.outer(v, out).reshape(-1)
    return out


def unconstrained_system(space: Space, A: CsrMatrix, rhs=None) -> AssembledSystem:
    """Wrap a matrix without boundary conditions (e.g. a periodic mass matrix)."""
    rhs = np.zeros(space.N) if rhs is None else np.asarray(rhs, float)
    return AssembledSystem(space, A, rhs, np.zeros(0, np.int64), np.zeros(0), np.arange(space.N))


def full_solution(system: AssembledSystem, x) -> np.ndarray:
    """Global DOF vector from a reduced solution plus the Dirichlet lift."""
    u = np.empty(system.n_full)
    u[system.retained_to_full] = x
    u[system.dirichlet_dofs] = system.lift_values
    return u


@dataclass
class CondensedSystem:
    """Skeleton (Schur complement) system plus per-element recovery data."""

    system: AssembledSystem
    matrix: CsrMatrix
    rhs: np.ndarray
    skeleton: np.ndarray
    interior: np.ndarray
    interior_dofs: np.ndarray | None = field(default=None, repr=False)
    skeleton_dofs: np.ndarray | None = field(default=None, repr=False)
    chol: np.ndarray | None = field(default=None, repr=False)
    coupling: np.ndarray | None = field(default=None, repr=False)
    interior_rhs: np.ndarray | None = field(default=None, repr=False)
    flops: FlopCounter = field(default_factory=FlopCounter)
    seconds: float = 0.0

    @property
    def n_skeleton(self) -> int:
        return self.skeleton.size


def _interior_local(p: int, dim: int) -> np.ndarray:
    loc = np.arange(p + 1)
    grids = np.meshgrid(*([loc] * dim), indexing="ij")
    inside = np.ones(grids[0].shape, dtype=bool)
    for g in grids:
        inside &= (g > 0) & (g < p)
    return inside.reshape(-1)


def static_condense(space: Space, system: AssembledSystem, batch: int = 512) -> CondensedSystem:
    """Eliminate element-interior DOFs element by element.

    The skeleton matrix is ``A_ss - sum_e A_si^e (A_ii^e)^{-1} A_is^e`` and
    keeps the structural pattern of ``A_ss``.
    """
    p = space.degree
    if space.continuity is Continuity.CPM1 and p >= 2:
        raise ValueError("static condensation applies to C0 spaces (C^(p-1) has no element-interior DOFs)")
    t0 = time.perf_counter()
    n = system.n
    A = system.matrix
    if p == 1:
        return CondensedSystem(system, A, system.rhs.copy(), np.arange(n), np.zeros(0, np.int64),
                               seconds=time.perf_counter() - t0)

    to_reduced = np.full(system.n_full, -1, np.int64)
    to_reduced[system.retained_to_full] = np.arange(n)
    conn = to_reduced[all_element_dofs(space)]
    inside = _interior_local(p, space.dim)
    int_dofs = conn[:, inside]
    skel_red = conn[:, ~inside]
    if np.any(int_dofs < 0):
        raise ValueError("element-interior DOF found on the Dirichlet boundary")

    is_interior = np.zeros(n, dtype=bool)
    is_interior[int_dofs.ravel()] = True
    skeleton = np.flatnonzero(~is_interior)
    interior = np.flatnonzero(is_interior)
    to_skel = np.full(n, -1, np.int64)
    to_skel[skeleton] = np.arange(skeleton.size)
    skel_dofs = np.where(skel_red >= 0, to_skel[np.maximum(skel_red, 0)], -1)

    S = A.submatrix(skeleton, skeleton)
    S = S.with_data(S.data.copy())
    f = system.rhs
    g = f[skeleton].copy()
    ni = int(inside.sum())
    ns = skel_red.shape[1]
    chol = np.empty((space.N_e, ni, ni))
    coupling = np.empty((space.N_e, ni, ns))
    f_int = f[int_dofs]
    flops = FlopCounter()
    for start in range(0, space.N_e, batch):
        sl = slice(start, min(start + batch, space.N_e))
        dofs = np.concatenate([int_dofs[sl], skel_red[sl]], axis=1)
        blocks = gather_blocks(A, dofs)
        Aii = blocks[:, :ni, :ni]
        Ais = blocks[:, :ni, ni:]
        L = np.linalg.cholesky(Aii)
        W = np.linalg.solve(L, Ais)
        y = np.linalg.solve(L, f_int[sl][..., None])[..., 0]
        upd = np.einsum("eka,ekb->eab", W, W)
        upd = 0.5 * (upd + np.swapaxes(upd, 1, 2))
        pos = block_positions(S, skel_dofs[sl])
        scatter_blocks(S.data, pos, upd, sign=-1.0)
        contrib = np.einsum("eka,ek->ea", W, y)
        valid = skel_dofs[sl] >= 0
        np.add.at(g, skel_dofs[sl][valid], -contrib[valid])
        chol[sl] = L
        coupling[sl] = Ais
    n_el = space.N_e
    flops.add("dense_inversion", n_el * (ni**3 // 3 + ni * ni * ns + ni * ni + 2 * ni * ns * ns + 2 * ni * ns))
    return CondensedSystem(system, S, g, skeleton, interior, int_dofs, skel_dofs, chol, coupling,
                           f_int, flops, time.perf_counter() - t0)


def recover_interior(condensed: CondensedSystem, skeleton_solution) -> np.ndarray:
    """Back-substitute ``u_i = A_ii^{-1} (f_i - A_is u_s)`` per element.

    Returns the solution in the numbering of the condensed system's input.
    """
    us = np.asarray(skeleton_solution, dtype=float)
    if us.shape != (condensed.n_skeleton,):
        raise ValueError(f"skeleton solution has length {us.shape}, expected {condensed.n_skeleton}")
    n = condensed.system.n
    u = np.zeros(n)
    u[condensed.skeleton] = us
    if condensed.interior.size == 0:
        return u
    sd = condensed.skeleton_dofs
    us_loc = np.where(sd >= 0, us[np.maximum(sd, 0)], 0.0)
    r = condensed.interior_rhs - np.einsum("eab,eb->ea", condensed.coupling, us_loc)
    L = condensed.chol
    y = np.linalg.solve(L, r[..., None])
    x = np.linalg.solve(np.swapaxes(L, 1, 2), y)[..., 0]
    u[condensed.interior_dofs] = x
    return u
