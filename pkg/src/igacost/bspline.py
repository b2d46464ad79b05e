"""Uniform 1D B-spline knot vectors, local basis evaluation and Gauss rules.

Two continuity classes are supported on the unit interval: ``C0`` (every
interior breakpoint repeated ``p`` times, i.e. the classical finite element
space) and ``Cpm1`` (single interior knots, maximal smoothness).  Open
vectors clamp both ends with ``p+1`` repeated knots; periodic vectors are
evaluated by index wrap-around of a uniform bi-infinite knot sequence.

Local numbering convention: on element ``e`` the ``p+1`` nonzero functions
have global indices ``e*m + k`` (``k = 0..p``), where ``m`` is the interior
knot multiplicity, reduced modulo the DOF count for periodic vectors.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Continuity",
    "KnotVector",
    "QuadratureRule",
    "BasisTable",
    "make_knot_vector",
    "eval_basis",
    "gauss_rule",
    "refine",
    "prolongation_1d",
]


class Continuity(str, enum.Enum):
    C0 = "c0"
    CPM1 = "cpm1"

    @classmethod
    def parse(cls, value) -> "Continuity":
        if isinstance(value, Continuity):
            return value
        key = str(value).strip().lower().replace("^", "").replace("{", "").replace("}", "")
        aliases = {"c0": cls.C0, "cpm1": cls.CPM1, "cp-1": cls.CPM1, "cpminus1": cls.CPM1}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown continuity {value!r}; expected 'c0' or 'cpm1'") from None


@dataclass(frozen=True)
class KnotVector:
    """A uniform knot vector on [0, 1].

    For open vectors ``knots`` is the full clamped sequence.  For periodic
    vectors it holds one period of breakpoints ``i/n`` (each repeated with
    the interior multiplicity) and is informational only.
    """

    degree: int
    n_elements: int
    continuity: Continuity
    periodic: bool
    knots: np.ndarray = field(repr=False, compare=False)

    @property
    def multiplicity(self) -> int:
        return self.degree if self.continuity is Continuity.C0 else 1

    @property
    def n_dofs(self) -> int:
        p, n, m = self.degree, self.n_elements, self.multiplicity
        if self.periodic:
            return n * m
        return n * m + p + 1 - m

    @property
    def element_size(self) -> float:
        return 1.0 / self.n_elements

    def breakpoints(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_elements + 1)

    def first_dof(self, element: int) -> int:
        return element * self.multiplicity

    def element_dofs(self, element: int) -> np.ndarray:
        idx = self.first_dof(element) + np.arange(self.degree + 1)
        if self.periodic:
            idx %= self.n_dofs
        return idx

    def local_knots(self, element: int) -> np.ndarray:
        """The ``2p`` knots ``t[s-p+1] .. t[s+p]`` around the span of ``element``."""
        p, m, n = self.degree, self.multiplicity, self.n_elements
        if not self.periodic:
            s = p + element * m
            return self.knots[s - p + 1 : s + p + 1]
        j = element * m + m - p + np.arange(2 * p)
        return np.floor_divide(j, m) / n

    def element_table(self) -> np.ndarray:
        """``(n_elements, p+1)`` array of global DOF indices per element."""
        return np.stack([self.element_dofs(e) for e in range(self.n_elements)])


def make_knot_vector(p: int, n_elements: int, continuity="cpm1", periodic: bool = False) -> KnotVector:
    """Build a uniform knot vector with the multiplicities of ``continuity``."""
    continuity = Continuity.parse(continuity)
    if int(p) != p or p < 1:
        raise ValueError(f"degree must be a positive integer, got {p!r}")
    if int(n_elements) != n_elements or n_elements < 1:
        raise ValueError(f"n_elements must be a positive integer, got {n_elements!r}")
    p, n_elements = int(p), int(n_elements)
    m = p if continuity is Continuity.C0 else 1
    if periodic and continuity is Continuity.CPM1 and n_elements <= p:
        raise ValueError(
            f"periodic C^(p-1) vector needs n_elements >= p+1 (got n_elements={n_elements}, p={p})"
        )
    inner = np.repeat(np.arange(1, n_elements) / n_elements, m)
    if periodic:
        knots = np.concatenate([np.zeros(m), inner, [1.0]])
    else:
        knots = np.concatenate([np.zeros(p + 1), inner, np.ones(p + 1)])
    return KnotVector(p, n_elements, continuity, bool(periodic), knots)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


def gauss_rule(q: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``q`` points on [-1, 1]."""
    if int(q) != q or not 1 <= q <= 16:
        raise ValueError(f"number of Gauss points must be in 1..16, got {q!r}")
    x, w = np.polynomial.legendre.leggauss(int(q))
    return QuadratureRule(x, w)


@dataclass(frozen=True)
class BasisTable:
    """Values and x-derivatives of the ``p+1`` functions nonzero on an element.

    ``values[i, k]`` is function ``indices[k]`` at parent point ``i``.
    """

    element: int
    points: np.ndarray
    x: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    indices: np.ndarray


def _local_values(w: np.ndarray, d: int, x: np.ndarray) -> np.ndarray:
    """Degree-``d`` values on the span ``[w[c-1], w[c]]`` (``c`` = len(w)//2).

    Triangular Cox-de Boor scheme; ``w`` must hold ``2d`` knots centred on
    the span.
    """
    npts = x.shape[0]
    N = np.zeros((npts, d + 1))
    N[:, 0] = 1.0
    left = np.zeros((npts, d + 1))
    right = np.zeros((npts, d + 1))
    for j in range(1, d + 1):
        left[:, j] = x - w[d - j]
        right[:, j] = w[d - 1 + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def eval_basis(kv: KnotVector, element: int, points) -> BasisTable:
    """Evaluate the local basis of ``element`` at parent points in [-1, 1]."""
    if not 0 <= element < kv.n_elements:
        raise IndexError(f"element {element} out of range 0..{kv.n_elements - 1}")
    xi = np.atleast_1d(np.asarray(points, dtype=float))
    if np.any(np.abs(xi) > 1.0 + 1e-14):
        raise ValueError("parent points must lie in [-1, 1]")
    p = kv.degree
    h = kv.element_size
    a = element * h
    x = a + 0.5 * (xi + 1.0) * h
    w = kv.local_knots(element)
    values = _local_values(w, p, x)

    lower = _local_values(w[1:-1], p - 1, x) if p > 1 else np.ones((len(x), 1))
    ders = np.zeros_like(values)
    for r in range(p + 1):
        if r >= 1:
            ders[:, r] += p * lower[:, r - 1] / (w[p - 1 + r] - w[r - 1])
        if r <= p - 1:
            ders[:, r] -= p * lower[:, r] / (w[p + r] - w[r])
    return BasisTable(element, xi, x, values, ders, kv.element_dofs(element))


def refine(kv: KnotVector) -> KnotVector:
    """Uniform bisection: same degree and continuity, twice the elements."""
    return make_knot_vector(kv.degree, 2 * kv.n_elements, kv.continuity, kv.periodic)


def prolongation_1d(coarse: KnotVector, fine: KnotVector | None = None) -> np.ndarray:
    """Dense matrix ``P`` with ``fine_coeffs = P @ coarse_coeffs``.

    Built by repeated single-knot insertion (Boehm), so it reproduces every
    coarse function exactly on the nested fine space.
    """
    if fine is None:
        fine = refine(coarse)
    if coarse.periodic or fine.periodic:
        raise NotImplementedError("prolongation is implemented for open knot vectors")
    if fine.degree != coarse.degree or fine.continuity is not coarse.continuity:
        raise ValueError("fine and coarse vectors must share degree and continuity")
    if fine.n_elements % coarse.n_elements:
        raise ValueError("fine vector is not a refinement of the coarse one")
    p = coarse.degree
    U = coarse.knots.copy()
    P = np.eye(coarse.n_dofs)
    target = list(fine.knots)
    for x in sorted(set(target)):
        need = target.count(x) - int(np.count_nonzero(U == x))
        for _ in range(need):
            k = int(np.searchsorted(U, x, side="right") - 1)
            n = P.shape[0]
            A = np.zeros((n + 1, n))
            for i in range(n + 1):
                if i <= k - p:
                    alpha = 1.0
                elif i >= k + 1:
                    alpha = 0.0
                else:
                    alpha = (x - U[i]) / (U[i + p] - U[i])
                if i < n:
                    A[i, i] = alpha
                if i >= 1:
                    A[i, i - 1] = 1.0 - alpha
            P = A @ P
            U = np.insert(U, k + 1, x)
    if U.shape != fine.knots.shape or not np.allclose(U, fine.knots):
        raise ValueError("knot insertion did not reproduce the fine vector")
    return P
