"""Closed-form nonzero and FLOP cost models, the computational C0 ILU cost
fit, and measured-vs-asymptotic ratio reports."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .bspline import Continuity
from .space import Space, attributed_dofs, build_pattern, classify_dofs, make_space
from .sparsekit import ilu0_flop_estimate

__all__ = [
    "NNZ_KINDS",
    "CPM1_ILU_COEFFS",
    "C0_ILU_COEFFS",
    "polyval",
    "per_element_nnz",
    "nnz_ratio",
    "ilu_row_cost",
    "ilu_setup_flops",
    "skeleton_nnz",
    "counted_nnz",
    "IluFit",
    "fit_c0_ilu_cost",
    "CostEntry",
    "COST_MODEL",
    "cost_table",
    "ratio_report",
]

NNZ_KINDS = ("c0", "cpm1", "c0_condensed")

# highest degree first
CPM1_ILU_COEFFS = tuple(Fraction(c) for c in (32, 96, 120, 76, 24, 3, 0))
C0_ILU_COEFFS = tuple(Fraction(n, d) for n, d in
                      ((2, 3), (26, 3), (128, 3), (601, 6), (355, 3), (200, 3), (83, 6)))


def polyval(coeffs, x):
    """Horner evaluation, coefficients highest degree first (exact for Fractions)."""
    acc = 0 * x
    for c in coeffs:
        acc = acc * x + c
    return acc


def _check_p(p):
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    return int(p)


def per_element_nnz(p: int, kind: str) -> int:
    """Nonzeros per ``p^3`` unknowns (one C0 element's worth) in 3D.

    ``c0``: ``p^3 (p+2)^3``; ``cpm1``: ``p^3 (2p+1)^3``;
    ``c0_condensed``: ``33p^4 - 12p^3 + 9p^2 - 6p + 3``.
    """
    p = _check_p(p)
    if kind == "c0":
        return p**3 * (p + 2) ** 3
    if kind == "cpm1":
        return p**3 * (2 * p + 1) ** 3
    if kind == "c0_condensed":
        return 33 * p**4 - 12 * p**3 + 9 * p**2 - 6 * p + 3
    raise ValueError(f"unknown kind {kind!r}; expected one of {NNZ_KINDS}")


def nnz_ratio(p: int, condensed: bool = False) -> Fraction:
    """Asymptotic (infinite N) C^(p-1) : C0 nonzero ratio."""
    return Fraction(per_element_nnz(p, "cpm1"), per_element_nnz(p, "c0_condensed" if condensed else "c0"))


def ilu_row_cost(p: int, kind: str) -> Fraction:
    """ILU(0) setup FLOPs per unknown (C0 uses the fitted polynomial)."""
    p = _check_p(p)
    kind = Continuity.parse(kind)
    coeffs = CPM1_ILU_COEFFS if kind is Continuity.CPM1 else C0_ILU_COEFFS
    return polyval(coeffs, Fraction(p))


def ilu_setup_flops(p: int, kind: str, N: int):
    """``N`` times the per-row ILU(0) setup cost."""
    v = ilu_row_cost(p, kind) * N
    return int(v) if v.denominator == 1 else float(v)


def counted_nnz(space: Space) -> int:
    return build_pattern(space).nnz


def _skeleton_mask(space: Space) -> np.ndarray:
    ent = classify_dofs(space)
    return ent.interior_dims < space.dim


def skeleton_nnz(space: Space) -> int:
    """Nonzeros of the statically condensed (skeleton) operator of a C0 space.

    Skeleton DOFs of one element are coupled pairwise already, so the Schur
    complement keeps the pattern of the skeleton-skeleton block.
    """
    P = build_pattern(space)
    keep = _skeleton_mask(space)
    rows = np.repeat(keep, P.row_lengths())
    return int(np.count_nonzero(rows & keep[P.indices]))


@dataclass(frozen=True)
class IluFit:
    """Per-DOF C0 ILU(0) cost samples and the interpolating polynomial."""

    degrees: tuple[int, ...]
    costs: tuple[Fraction, ...]
    coefficients: tuple[Fraction, ...]  # highest degree first
    reference: tuple[Fraction, ...] = C0_ILU_COEFFS

    def __call__(self, p):
        return polyval(self.coefficients, Fraction(p))

    def deviation(self) -> list[float]:
        """Relative deviation of each fitted coefficient from the reference."""
        return [float(abs(c - r) / abs(r)) for c, r in zip(self.coefficients, self.reference)]


def _exact_interpolate(xs, ys) -> tuple[Fraction, ...]:
    """Coefficients (highest first) of the polynomial through the points, exactly."""
    n = len(xs)
    A = [[Fraction(x) ** (n - 1 - j) for j in range(n)] + [Fraction(y)] for x, y in zip(xs, ys)]
    for c in range(n):
        piv = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[piv] = A[piv], A[c]
        for r in range(n):
            if r != c and A[r][c] != 0:
                f = A[r][c] / A[c][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return tuple(A[i][n] / A[i][i] for i in range(n))


def middle_element_cost(p: int, n_elements: int = 5) -> Fraction:
    """Estimated ILU(0) FLOPs per DOF owned by the central element of an open C0 mesh."""
    space = make_space(p, n_elements, "c0")
    pattern = build_pattern(space).to_csr()
    cost = ilu0_flop_estimate(pattern, per_row=True)
    mid = n_elements // 2
    owned = attributed_dofs(space, (mid,) * space.dim)
    return Fraction(int(cost[owned].sum()), len(owned))


def fit_c0_ilu_cost(p_range=range(1, 8), n_elements: int = 5) -> IluFit:
    """Fit the degree-``len(p_range)-1`` C0 ILU(0) cost polynomial."""
    degrees = tuple(int(p) for p in p_range)
    costs = tuple(middle_element_cost(p, n_elements) for p in degrees)
    return IluFit(degrees, costs, _exact_interpolate(degrees, costs))


@dataclass(frozen=True)
class CostEntry:
    """Leading-order setup/apply FLOP estimate of one preconditioner on one space."""

    preconditioner: str
    space: str
    setup_label: str
    apply_label: str
    setup: Callable
    apply: Callable
    needs_r: bool = False


COST_MODEL = (
    CostEntry("jacobi", "c0", "N", "N", lambda p, N, r: N, lambda p, N, r: N),
    CostEntry("jacobi", "cpm1", "N", "N", lambda p, N, r: N, lambda p, N, r: N),
    CostEntry("ssor", "c0", "N", "2Np^3", lambda p, N, r: N, lambda p, N, r: 2 * N * p**3),
    CostEntry("ssor", "cpm1", "N", "16Np^3", lambda p, N, r: N, lambda p, N, r: 16 * N * p**3),
    CostEntry("ilu", "c0", "(2/3)Np^6", "Np^3", lambda p, N, r: Fraction(2, 3) * N * p**6, lambda p, N, r: N * p**3),
    CostEntry("ilu", "cpm1", "32Np^6", "8Np^3", lambda p, N, r: 32 * N * p**6, lambda p, N, r: 8 * N * p**3),
    CostEntry("ebe", "c0", "2Np^6", "Np^3", lambda p, N, r: 2 * N * p**6, lambda p, N, r: N * p**3),
    CostEntry("ebe", "cpm1", "2Np^9", "8Np^3", lambda p, N, r: 2 * N * p**9, lambda p, N, r: 8 * N * p**3),
    CostEntry("bbb", "cpm1", "2^10 N r^9", "(2r/p)^9 8Np^3",
              lambda p, N, r: 2**10 * N * r**9, lambda p, N, r: Fraction(2 * r, p) ** 9 * 8 * N * p**3, True),
)


def _exact_setup(entry: CostEntry, p: int, N: int, r: int):
    """Exact counterparts of the leading-order forms where they exist."""
    if entry.preconditioner == "ilu":
        return ilu_setup_flops(p, entry.space, N)
    if entry.preconditioner == "ebe":
        n_e = N // p**3 if entry.space == "c0" else N
        return n_e * 2 * (p + 1) ** 9
    if entry.preconditioner == "bbb":
        return N * 2 * (2 * r + 1) ** 9
    return entry.setup(p, N, r)


def _num(v):
    v = Fraction(v)
    return int(v) if v.denominator == 1 else float(v)


def cost_table(p: int, N: int, r: int | None = None) -> list[dict]:
    """Setup/apply FLOP estimates for every preconditioner, evaluated at ``p, N, r``.

    ``setup_exact`` uses the full polynomials (ILU), ``(p+1)^9`` element blocks
    (EBE) and ``(2r+1)^9`` basis blocks (BBB) instead of the leading terms.
    """
    p = _check_p(p)
    N = int(N)
    r = p // 2 if r is None else int(r)
    rows = []
    for e in COST_MODEL:
        rows.append({
            "pc": e.preconditioner, "space": e.space, "p": p, "N": N, "r": r if e.needs_r else "",
            "setup_formula": e.setup_label, "apply_formula": e.apply_label,
            "setup_flops": _num(e.setup(p, N, r)), "apply_flops": _num(e.apply(p, N, r)),
            "setup_exact": _num(_exact_setup(e, p, N, r)),
        })
    return rows


def ratio_report(p_list, n_list) -> list[dict]:
    """Measured and asymptotic C^(p-1) : C0 nonzero ratios at matched N.

    For each ``n`` the periodic C0 space has ``n/p`` elements per direction
    and the C^(p-1) space ``n``, both with ``n^3`` unknowns.  The measured
    ratio equals the asymptotic one once ``n/p >= 3`` and ``n >= 2p + 1``;
    shorter periods fold the band onto itself.
    """
    rows = []
    for p in p_list:
        p = _check_p(p)
        for n in n_list:
            if n % p:
                raise ValueError(f"n = {n} is not divisible by p = {p}")
            c0 = make_space(p, n // p, "c0", periodic=True)
            c1 = make_space(p, n, "cpm1", periodic=True)
            nnz0, nnz1 = counted_nnz(c0), counted_nnz(c1)
            sk = skeleton_nnz(c0)
            rows.append({
                "p": p, "n": n, "N": c0.N, "nnz_c0": nnz0, "nnz_cpm1": nnz1, "nnz_c0_condensed": sk,
                "ratio": nnz1 / nnz0, "ratio_condensed": nnz1 / sk,
                "ratio_inf": float(nnz_ratio(p)), "ratio_condensed_inf": float(nnz_ratio(p, True)),
            })
    return rows
