"""Tensor-product spline spaces on the unit cube.

DOFs and elements are numbered lexicographically with x fastest, so a
global index is ``ix + nx * (iy + ny * iz)``.  Sparse operators on a space
are Kronecker products ``Z (x) Y (x) X`` of 1D operators in that numbering.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .bspline import Continuity, KnotVector, make_knot_vector
from .sparsekit import CsrMatrix, kron_csr

__all__ = [
    "Space",
    "Entity",
    "EntityClass",
    "SparsityPattern",
    "InteractionRow",
    "make_space",
    "element_dofs",
    "all_element_dofs",
    "classify_dofs",
    "attributed_dofs",
    "interaction_counts",
    "pattern_1d",
    "build_pattern",
    "basis_support_h",
    "lattice_lower_mask",
    "coarsen",
]


@dataclass(frozen=True)
class Space:
    """Tensor product of per-direction knot vectors (x first)."""

    kvs: tuple[KnotVector, ...]

    def __post_init__(self):
        if not 1 <= len(self.kvs) <= 3:
            raise ValueError("spaces have 1 to 3 dimensions")
        first = self.kvs[0]
        for kv in self.kvs[1:]:
            if (kv.degree, kv.continuity, kv.periodic) != (first.degree, first.continuity, first.periodic):
                raise ValueError("all directions must share degree, continuity and periodicity")

    @property
    def dim(self) -> int:
        return len(self.kvs)

    @property
    def degree(self) -> int:
        return self.kvs[0].degree

    @property
    def continuity(self) -> Continuity:
        return self.kvs[0].continuity

    @property
    def periodic(self) -> bool:
        return self.kvs[0].periodic

    @property
    def dof_shape(self) -> tuple[int, ...]:
        return tuple(kv.n_dofs for kv in self.kvs)

    @property
    def element_shape(self) -> tuple[int, ...]:
        return tuple(kv.n_elements for kv in self.kvs)

    @property
    def N(self) -> int:
        return math.prod(self.dof_shape)

    @property
    def N_e(self) -> int:
        return math.prod(self.element_shape)

    @property
    def dofs_per_element(self) -> int:
        return (self.degree + 1) ** self.dim

    def grid_index(self, dof) -> tuple:
        """Per-direction indices (x, y, z) of global DOF(s)."""
        return tuple(reversed(np.unravel_index(dof, tuple(reversed(self.dof_shape)))))

    def global_index(self, *idx) -> np.ndarray:
        g = np.zeros(np.broadcast(*idx).shape, dtype=np.int64)
        stride = 1
        for i, n in zip(idx, self.dof_shape):
            g = g + np.asarray(i, dtype=np.int64) * stride
            stride *= n
        return g

    def element_index(self, element) -> tuple[int, ...]:
        if np.isscalar(element):
            element = tuple(int(v) for v in reversed(np.unravel_index(int(element), tuple(reversed(self.element_shape)))))
        element = tuple(int(e) for e in element)
        if len(element) != self.dim or any(not 0 <= e < n for e, n in zip(element, self.element_shape)):
            raise IndexError(f"element {element} outside grid {self.element_shape}")
        return element

    def __repr__(self) -> str:
        return (
            f"Space(p={self.degree}, {self.continuity.value}, elements={self.element_shape}, "
            f"{'periodic' if self.periodic else 'open'}, N={self.N})"
        )


def make_space(p: int, n_elements, continuity="cpm1", periodic: bool = False, dim: int = 3) -> Space:
    if np.isscalar(n_elements):
        n_elements = (int(n_elements),) * dim
    if len(n_elements) != dim:
        raise ValueError("need one element count per dimension")
    return Space(tuple(make_knot_vector(p, n, continuity, periodic) for n in n_elements))


def coarsen(space: Space) -> Space:
    """Space with every per-direction element count halved."""
    if any(n % 2 for n in space.element_shape):
        raise ValueError(f"element counts {space.element_shape} must all be even to coarsen")
    return make_space(space.degree, tuple(n // 2 for n in space.element_shape),
                      space.continuity, space.periodic, space.dim)


def _combine(space: Space, per_dim) -> np.ndarray:
    """Global indices of the tensor product of per-direction index arrays.

    ``per_dim[d]`` has shape ``(..., k_d)``; the result enumerates local
    combinations lexicographically (x fastest).
    """
    g = 0
    stride = 1
    for d, idx in enumerate(per_dim):
        shape = [1] * len(per_dim)
        shape[len(per_dim) - 1 - d] = -1
        g = g + np.asarray(idx).reshape(shape) * stride
        stride *= space.dof_shape[d]
    return np.asarray(g).reshape(-1)


def element_dofs(space: Space, element) -> np.ndarray:
    """Global DOFs of one element, ``(p+1)^dim`` entries in local lexicographic order."""
    element = space.element_index(element)
    return _combine(space, [kv.element_dofs(e) for kv, e in zip(space.kvs, element)])


def all_element_dofs(space: Space) -> np.ndarray:
    """``(N_e, (p+1)^dim)`` connectivity, elements in lexicographic order."""
    tables = [kv.element_table() for kv in space.kvs]
    dim = space.dim
    g = np.zeros((1,) * (2 * dim), dtype=np.int64)
    stride = 1
    for d, T in enumerate(tables):
        shape = [1] * (2 * dim)
        shape[dim - 1 - d] = T.shape[0]
        shape[2 * dim - 1 - d] = T.shape[1]
        g = g + T.reshape(shape).astype(np.int64) * stride
        stride *= space.dof_shape[d]
    return g.reshape(space.N_e, space.dofs_per_element)


class Entity(enum.IntEnum):
    VERTEX = 0
    EDGE = 1
    FACE = 2
    INTERIOR = 3


def _entity_names(dim: int) -> list[str]:
    names = ["vertex", "edge", "face"][:dim] + ["interior"]
    return names


@dataclass(frozen=True)
class EntityClass:
    """Per-DOF topological label of a C0 space.

    ``interior_dims[i]`` is the number of directions in which DOF ``i`` is
    element-interior (0 vertex, 1 edge, 2 face, 3 interior in 3D).
    """

    interior_dims: np.ndarray
    dim: int

    @property
    def names(self) -> list[str]:
        return _entity_names(self.dim)

    def label(self, dof: int) -> str:
        k = int(self.interior_dims[dof])
        return self.names[k if k < self.dim else -1]

    def counts(self, dofs=None) -> dict[str, int]:
        k = self.interior_dims if dofs is None else self.interior_dims[np.asarray(dofs)]
        return {name: int(np.count_nonzero(k == i)) for i, name in enumerate(self.names)}

    def mask(self, name: str) -> np.ndarray:
        return self.interior_dims == self.names.index(name)


def classify_dofs(space: Space) -> EntityClass:
    if space.continuity is not Continuity.C0 and space.degree > 1:
        raise ValueError("entity classification is defined for C0 spaces")
    p = space.degree
    per_dim = [(np.arange(kv.n_dofs) % p != 0).astype(np.int8) for kv in space.kvs]
    grids = np.meshgrid(*reversed(per_dim), indexing="ij")
    return EntityClass(sum(grids).reshape(-1).astype(np.int8), space.dim)


def _attributed_local(kv: KnotVector, element: int) -> np.ndarray:
    local = np.arange(kv.multiplicity)
    if not kv.periodic and element == kv.n_elements - 1:
        local = np.arange(kv.degree + 1)
    return kv.element_dofs(element)[local]


def attributed_dofs(space: Space, element) -> np.ndarray:
    """DOFs owned by ``element``: its leading vertex/edges/faces and interior.

    Each element claims the first ``multiplicity`` local indices per direction
    (the entities at its lower corner); on open grids the last element per
    direction also claims the closing boundary layer.
    """
    element = space.element_index(element)
    return _combine(space, [_attributed_local(kv, e) for kv, e in zip(space.kvs, element)])


class InteractionRow(NamedTuple):
    dim: int
    entity: str
    n_entities: int
    dofs_per_entity: int
    interactions: int


def interaction_counts(dim: int, p: int) -> list[InteractionRow]:
    """Per-element DOF/interaction census of a C0 basis on a structured grid."""
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2 or 3")
    if p < 1:
        raise ValueError("p must be positive")
    rows = []
    for k, name in enumerate(_entity_names(dim)):
        rows.append(InteractionRow(
            dim, name, math.comb(dim, k), (p - 1) ** k, (2 * p + 1) ** (dim - k) * (p + 1) ** k,
        ))
    return rows


@dataclass(frozen=True)
class SparsityPattern:
    indptr: np.ndarray
    indices: np.ndarray
    n: int

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def row(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_csr(self, data=None) -> CsrMatrix:
        data = np.ones(self.nnz) if data is None else data
        return CsrMatrix(self.indptr, self.indices, data, (self.n, self.n), check=False)


def pattern_1d(kv: KnotVector) -> sp.csr_matrix:
    """1D support-overlap pattern as a sorted scipy CSR matrix of ones."""
    T = kv.element_table()
    k = T.shape[1]
    rows = np.repeat(T, k, axis=1).ravel()
    cols = np.tile(T, (1, k)).ravel()
    P = sp.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(kv.n_dofs, kv.n_dofs)).tocsr()
    P.sum_duplicates()
    P.data[:] = 1.0
    P.sort_indices()
    return P


def build_pattern(space: Space) -> SparsityPattern:
    """Pattern of all pairs of basis functions whose supports overlap."""
    A = kron_csr([pattern_1d(kv) for kv in space.kvs])
    return SparsityPattern(A.indptr, A.indices, A.n_rows)


def basis_support_h(space: Space) -> float:
    """Half the basis support size: ``h_e`` for C0, ``h_e (p+1)/2`` for C^(p-1)."""
    sizes = {kv.element_size for kv in space.kvs}
    if len(sizes) != 1:
        raise ValueError("h is defined for uniform grids with equal element counts")
    h_e = sizes.pop()
    if space.continuity is Continuity.C0:
        return h_e
    return h_e * (space.degree + 1) / 2


def lattice_lower_mask(space: Space, A) -> np.ndarray:
    """Strictly-lower flags for the stored entries of an operator on ``space``.

    An entry ``(i, j)`` is lower when the per-direction offset ``j - i``
    (wrapped to the nearest image on periodic grids) precedes zero in
    lexicographic z, y, x order.  On open grids this is exactly ``j < i``;
    on periodic grids every row gets the same split, as on an infinite
    lattice.  Offsets must be unambiguous (fewer than half a period).
    """
    rows = np.repeat(np.arange(A.n_rows), np.diff(A.indptr))
    gi = space.grid_index(rows)
    gj = space.grid_index(np.asarray(A.indices))
    key = np.zeros(rows.size, dtype=np.int64)
    mult = 1
    for d, kv in enumerate(space.kvs):
        off = np.asarray(gj[d], np.int64) - np.asarray(gi[d], np.int64)
        n = kv.n_dofs
        if kv.periodic:
            off = (off + n // 2) % n - n // 2
            if np.any(np.abs(off) * 2 >= n):
                raise ValueError(f"periodic direction {d} with {n} DOFs is too short for unambiguous offsets")
        key = key + off * mult
        mult *= 2 * n + 1
    return key < 0
