import numpy as np
import pytest

from igacost.assembly import assemble, model_system
from igacost.bspline import eval_basis
from igacost.krylov import pcg
from igacost.precond import (
    KINDS,
    build_hierarchy,
    setup_bbb,
    setup_ebe,
    setup_ilu0,
    setup_jacobi,
    setup_preconditioner,
    setup_ssor,
    setup_twogrid,
    TwoGridPreconditioner,
    apply,
)
from igacost.space import all_element_dofs, make_space
from igacost.sparsekit import CsrMatrix, ilu0_factor, ilu0_solve, ssor_apply


@pytest.fixture(scope="module")
def cpm1_system():
    return model_system(make_space(2, 4, "cpm1"))


@pytest.fixture(scope="module")
def c0_system():
    return model_system(make_space(2, 2, "c0"))


def test_jacobi_payload_and_cost():
    A = CsrMatrix.from_dense(2 * np.eye(6))
    P = setup_jacobi(A)
    np.testing.assert_array_equal(P.inv_diag, 0.5)
    assert P.setup_flops == 6
    B = CsrMatrix.from_dense(4 * np.eye(3))
    np.testing.assert_allclose(apply(setup_jacobi(B), np.array([4.0, 8, 12])), [1, 2, 3])


def test_jacobi_matches_dense(cpm1_system):
    A = cpm1_system.matrix
    r = np.random.default_rng(0).standard_normal(A.n_rows)
    np.testing.assert_allclose(setup_jacobi(A).apply(r), r / np.diag(A.toarray()), rtol=1e-14)


def test_jacobi_zero_diagonal():
    with pytest.raises(ValueError):
        setup_jacobi(CsrMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 1.0]])))


def test_ssor_delegates(cpm1_system):
    A = cpm1_system.matrix
    P = setup_ssor(A, 1.3)
    r = np.random.default_rng(1).standard_normal(A.n_rows)
    np.testing.assert_array_equal(P.apply(r), ssor_apply(A, r, 1.3))
    assert P.setup_flops == A.n_rows
    before = P.flops.total()
    P.apply(r)
    assert abs(P.flops.total() - before - 2 * A.nnz) <= A.n_rows


def test_ilu_delegates(c0_system):
    A = c0_system.matrix
    P = setup_ilu0(A)
    r = np.random.default_rng(2).standard_normal(A.n_rows)
    np.testing.assert_array_equal(P.apply(r), ilu0_solve(ilu0_factor(A), r))


def test_ebe_single_element_is_exact_inverse():
    # unconstrained stiffness is singular; use mass
    s = make_space(3, 1, "cpm1")
    M = assemble(s, "mass")
    P = setup_ebe(M, s)
    np.testing.assert_allclose(P.matrix.toarray(), np.linalg.inv(M.toarray()), rtol=1e-8, atol=1e-8)
    assert P.setup_flops == 2 * (4**3) ** 3


def test_ebe_pattern_and_cost(c0_system):
    s = c0_system.space
    P = setup_ebe(c0_system.matrix, s, c0_system.retained_to_full)
    np.testing.assert_array_equal(P.matrix.indices, c0_system.matrix.indices)
    assert P.setup_flops <= s.N_e * 2 * (s.degree + 1) ** 9


def test_ebe_matches_dense_oracle(c0_system):
    s = c0_system.space
    A = c0_system.matrix.toarray()
    to_row = np.full(s.N, -1)
    to_row[c0_system.retained_to_full] = np.arange(c0_system.n)
    ref = np.zeros_like(A)
    for dofs in all_element_dofs(s):
        d = to_row[dofs]
        d = d[d >= 0]
        ref[np.ix_(d, d)] += np.linalg.inv(A[np.ix_(d, d)])
    P = setup_ebe(c0_system.matrix, s, c0_system.retained_to_full)
    np.testing.assert_allclose(P.matrix.toarray(), ref, rtol=1e-10, atol=1e-12)


def test_bbb_r0_is_jacobi(cpm1_system):
    A = cpm1_system.matrix
    P = setup_bbb(A, cpm1_system.space, 0, cpm1_system.retained_to_full)
    np.testing.assert_allclose(P.matrix.toarray(), np.diag(1 / A.diagonal()), rtol=1e-15)
    r = np.random.default_rng(3).standard_normal(A.n_rows)
    np.testing.assert_array_equal(P.apply(r), setup_jacobi(A).apply(r))


def test_bbb_dense_oracle(cpm1_system):
    s = cpm1_system.space
    A = cpm1_system.matrix.toarray()
    ret = cpm1_system.retained_to_full
    g = np.stack(s.grid_index(ret), axis=1)
    ref = np.zeros_like(A)
    for i in range(len(ret)):
        sub = np.flatnonzero(np.all(np.abs(g - g[i]) <= 1, axis=1))
        ref[np.ix_(sub, sub)] += np.linalg.inv(A[np.ix_(sub, sub)])
    P = setup_bbb(cpm1_system.matrix, s, 1, ret)
    np.testing.assert_allclose(P.matrix.toarray(), ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("p", [2, 4])
def test_bbb_half_p_equals_ebe_periodic(p):
    s = make_space(p, 2 * p + 2, "cpm1", periodic=True)
    M = assemble(s, "mass")
    B = setup_bbb(M, s, p // 2)
    E = setup_ebe(M, s)
    np.testing.assert_allclose(B.matrix.toarray(), E.matrix.toarray(), rtol=0, atol=1e-12 * abs(E.matrix.data).max())


@pytest.mark.parametrize("r", [0, 1, 2])
def test_bbb_row_nnz_periodic(r):
    s = make_space(2, 9, "cpm1", periodic=True)
    P = setup_bbb(assemble(s, "mass"), s, r)
    np.testing.assert_array_equal(P.matrix.row_lengths(), (4 * r + 1) ** 3)
    assert P.setup_flops == s.N * 2 * (2 * r + 1) ** 9


def test_bbb_validation(cpm1_system, c0_system):
    with pytest.raises(ValueError):
        setup_bbb(cpm1_system.matrix, cpm1_system.space, 3, cpm1_system.retained_to_full)
    with pytest.raises(ValueError):
        setup_bbb(cpm1_system.matrix, cpm1_system.space, -1, cpm1_system.retained_to_full)
    with pytest.raises(ValueError):
        setup_bbb(c0_system.matrix, c0_system.space, 1, c0_system.retained_to_full)


def _values(space1d, coeffs, x):
    out = np.zeros_like(x)
    n = space1d.n_elements
    for e in range(n):
        m = (x >= e / n) & ((x < (e + 1) / n) | (e == n - 1))
        t = eval_basis(space1d, e, 2 * (x[m] * n - e) - 1)
        out[m] = t.values @ coeffs[t.indices]
    return out


@pytest.mark.parametrize("cont,p", [("c0", 2), ("cpm1", 3)])
def test_hierarchy_prolongation_reproduces_coarse_functions(cont, p):
    sys_ = model_system(make_space(p, 4, cont))
    H = build_hierarchy(sys_)
    P = H.prolongation.toarray()
    np.testing.assert_allclose(P.sum(axis=1)[P.sum(axis=1) > 0].max(), 1.0)
    rng = np.random.default_rng(4)
    pts = rng.random((50, 3))
    fx, cx = H.fine.kvs[0], H.coarse.kvs[0]

    def evaluate(space, kv, full_coeffs):
        shape = space.dof_shape
        c = full_coeffs.reshape(shape[::-1])
        vals = []
        for x, y, z in pts:
            bx = [_values(kv, np.eye(kv.n_dofs)[j], np.array([x]))[0] for j in range(kv.n_dofs)]
            by = [_values(kv, np.eye(kv.n_dofs)[j], np.array([y]))[0] for j in range(kv.n_dofs)]
            bz = [_values(kv, np.eye(kv.n_dofs)[j], np.array([z]))[0] for j in range(kv.n_dofs)]
            vals.append(np.einsum("k,j,i,kji->", bz, by, bx, c))
        return np.array(vals)

    cc = np.zeros(H.coarse.N)
    cret = np.flatnonzero(np.all(np.stack(H.coarse.grid_index(np.arange(H.coarse.N))) > 0, axis=0))
    cc[cret] = rng.standard_normal(cret.size)
    fc = np.zeros(H.fine.N)
    fc[sys_.retained_to_full] = P @ cc[cret]
    np.testing.assert_allclose(evaluate(H.fine, fx, fc), evaluate(H.coarse, cx, cc), atol=1e-12)


@pytest.mark.parametrize("cont,p", [("c0", 2), ("cpm1", 2), ("cpm1", 3)])
def test_galerkin_coarse_equals_direct_coarse_assembly(cont, p):
    sys_ = model_system(make_space(p, 4, cont))
    H = build_hierarchy(sys_)
    Ac = H.coarse_matrix.toarray()
    direct = model_system(H.coarse).matrix.toarray()
    np.testing.assert_allclose(Ac, direct, atol=1e-10)
    PtAP = H.prolongation.scipy.T @ sys_.matrix.scipy @ H.prolongation.scipy
    np.testing.assert_allclose(PtAP.toarray(), direct, atol=1e-10)
    np.testing.assert_allclose(Ac, Ac.T, atol=0)


def test_pure_coarse_solve_on_equal_grid_is_inverse(cpm1_system):
    A = cpm1_system.matrix
    I = CsrMatrix.identity(A.n_rows)
    T = TwoGridPreconditioner(A, I, A, smoother=None)
    r = np.random.default_rng(5).standard_normal(A.n_rows)
    np.testing.assert_allclose(A.scipy @ T.apply(r), r, rtol=1e-10, atol=1e-10)


def test_twogrid_needs_even_elements():
    with pytest.raises(ValueError):
        setup_twogrid(model_system(make_space(2, 3, "cpm1")))


def all_kinds(system):
    out = []
    for k in KINDS:
        if k == "bbb" and system.space.continuity.value == "c0" and system.space.degree > 1:
            continue
        out.append(setup_preconditioner(k, system))
    return out


@pytest.mark.parametrize("cont", ["c0", "cpm1"])
def test_preconditioners_linear_symmetric_positive(cont):
    sys_ = model_system(make_space(2, 4, cont))
    rng = np.random.default_rng(6)
    n = sys_.n
    for P in all_kinds(sys_):
        u, v = rng.standard_normal(n), rng.standard_normal(n)
        a, b = 0.7, -1.3
        np.testing.assert_allclose(P.apply(a * u + b * v), a * P.apply(u) + b * P.apply(v), atol=1e-12)
        su, sv = P.apply(u) @ v, u @ P.apply(v)
        assert abs(su - sv) <= 1e-10 * max(1.0, abs(su)), P.kind
        V = rng.standard_normal((100, n))
        assert all(P.apply(x) @ x > 0 for x in V), P.kind


def test_dimension_mismatch(cpm1_system):
    for P in all_kinds(cpm1_system):
        with pytest.raises(ValueError):
            P.apply(np.ones(cpm1_system.n + 1))


def test_unknown_kind(cpm1_system):
    with pytest.raises(ValueError):
        setup_preconditioner("amg", cpm1_system)


def test_bbb_iterations_equal_jacobi():
    sys_ = model_system(make_space(3, 4, "cpm1"))
    _, a = pcg(sys_.matrix, sys_.rhs, setup_jacobi(sys_.matrix))
    _, b = pcg(sys_.matrix, sys_.rhs, setup_bbb(sys_.matrix, sys_.space, 0, sys_.retained_to_full))
    assert a.iterations == b.iterations


def test_bbb_table_cell_p4_r1():
    # basis support h = 0.25 with p = 4 gives 10 elements per direction
    sys_ = model_system(make_space(4, 10, "cpm1"))
    _, rep = pcg(sys_.matrix, sys_.rhs, setup_bbb(sys_.matrix, sys_.space, 1, sys_.retained_to_full))
    assert abs(rep.iterations - 56) <= 0.2 * 56


@pytest.mark.parametrize("h_inv", [4, 8])
def test_twogrid_cpm1_p2_near_constant(h_inv):
    # paper values 15 (h=1/4), 17 (h=1/8); this cycle is stronger, see the README
    sys_ = model_system(make_space(2, 3 * h_inv // 2, "cpm1"))
    x, rep = pcg(sys_.matrix, sys_.rhs, setup_twogrid(sys_))
    assert rep.converged and rep.iterations <= 21
    np.testing.assert_allclose(x, 1.0, atol=1e-6)


def test_flop_counter_isolated():
    sys_ = model_system(make_space(1, 4, "c0"))
    P = setup_twogrid(sys_)
    P.apply(np.ones(sys_.n))
    assert P.flops["trisolve"] > 0 and P.flops["coarse_solve"] > 0 and P.flops["transfer"] > 0


def test_setup_ssor_blocks():
    A = assemble(make_space(3, 2, "c0"), "mass")
    assert setup_ssor(A).blocks == "point"
    P = setup_ssor(A, blocks="inode")
    assert P.blocks == "inode"
    with pytest.raises(ValueError):
        setup_ssor(A, blocks="line")
