import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from igacost.assembly import assemble, model_system
from igacost.space import lattice_lower_mask, make_space
from igacost.sparsekit import (
    CsrMatrix,
    FlopCounter,
    ZeroPivotError,
    block_diagonal,
    block_positions,
    block_ssor_apply,
    gather_blocks,
    ilu0_factor,
    ilu0_flop_estimate,
    ilu0_solve,
    inode_blocks,
    kron_csr,
    read_matrix_market,
    scatter_blocks,
    spmv,
    ssor_apply,
)


def random_spd(n, density, seed):
    rng = np.random.default_rng(seed)
    B = sp.random(n, n, density=density, random_state=rng, format="csr")
    S = B + B.T
    S = S + sp.diags(np.asarray(abs(S).sum(axis=1)).ravel() + 1.0)
    return CsrMatrix.from_scipy(S.tocsr())


def dense_ilu0(A):
    """Textbook IKJ ILU(0) on a dense array, restricted to the nonzero mask."""
    a = A.astype(float).copy()
    mask = A != 0
    n = len(a)
    for i in range(1, n):
        for k in range(i):
            if not mask[i, k]:
                continue
            a[i, k] /= a[k, k]
            for j in range(k + 1, n):
                if mask[i, j]:
                    a[i, j] -= a[i, k] * a[k, j]
    return np.tril(a, -1) + np.eye(n), np.triu(a)


@pytest.fixture(params=[(40, 0.1, 0), (120, 0.03, 1), (200, 0.02, 2)])
def spd(request):
    return random_spd(*request.param)


@pytest.fixture
def assembled():
    return model_system(make_space(2, 2, "cpm1")).matrix


def test_csr_validation():
    with pytest.raises(ValueError):
        CsrMatrix([0, 2], [1, 0], [1.0, 1.0], (1, 2))
    with pytest.raises(ValueError):
        CsrMatrix([0, 1], [3], [1.0], (1, 2))


def test_from_dense_roundtrip():
    A = np.array([[2.0, 0, 1], [0, 3, 0], [1, 0, 4]])
    C = CsrMatrix.from_dense(A)
    assert C.nnz == 5
    np.testing.assert_array_equal(C.toarray(), A)
    np.testing.assert_array_equal(C.diagonal(), [2, 3, 4])


def test_missing_diagonal_detected():
    C = CsrMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 2.0]]))
    with pytest.raises(ValueError):
        C.require_diagonal()
    with pytest.raises(ValueError):
        ilu0_factor(C)


def test_flop_counter():
    f = FlopCounter()
    f.add("spmv", 10)
    g = FlopCounter()
    g.add("spmv", 5)
    g.add("ilu_estimate", 100)
    f.merge(g)
    assert f["spmv"] == 15 and f.total() == 15 and f.total("ilu_estimate") == 100
    with pytest.raises(KeyError):
        f.add("nonsense", 1)


def test_spmv_oracle(spd):
    x = np.random.default_rng(3).standard_normal(spd.n_rows)
    f = FlopCounter()
    y = spmv(spd, x, f)
    np.testing.assert_allclose(y, spd.toarray() @ x, rtol=1e-13, atol=1e-13)
    assert f["spmv"] == 2 * spd.nnz


def test_spmv_shape_check(spd):
    with pytest.raises(ValueError):
        spmv(spd, np.ones(spd.n_rows + 1))


@pytest.mark.parametrize("omega", [1.0, 0.7, 1.5])
def test_ssor_oracle(spd, omega):
    A = spd.toarray()
    D = np.diag(np.diag(A))
    L = np.tril(A, -1)
    U = np.triu(A, 1)
    M = (D / omega + L) @ np.linalg.inv(D) @ (D / omega + U) * (omega / (2 - omega))
    r = np.random.default_rng(4).standard_normal(len(A))
    f = FlopCounter()
    z = ssor_apply(spd, r, omega, f)
    np.testing.assert_allclose(M @ z, r, rtol=1e-10, atol=1e-10)
    assert f["ssor"] == 2 * spd.nnz


def test_ssor_omega_range(spd):
    with pytest.raises(ValueError):
        ssor_apply(spd, np.ones(spd.n_rows), 2.0)


def test_ilu0_matches_textbook(spd):
    F = ilu0_factor(spd)
    L, U = dense_ilu0(spd.toarray())
    np.testing.assert_allclose(F.lower().toarray(), L, atol=1e-12)
    np.testing.assert_allclose(F.upper().toarray(), U, atol=1e-12)


def test_ilu0_assembled_matches_textbook(assembled):
    F = ilu0_factor(assembled)
    L, U = dense_ilu0(assembled.toarray())
    np.testing.assert_allclose(F.lower().toarray(), L, atol=1e-12)
    np.testing.assert_allclose(F.upper().toarray(), U, atol=1e-12)
    np.testing.assert_array_equal(F.lu.indices, assembled.indices)


def test_ilu0_dense_pattern_is_exact_lu():
    rng = np.random.default_rng(5)
    B = rng.standard_normal((30, 30))
    A = B @ B.T + 30 * np.eye(30)
    C = CsrMatrix.from_dense(A)
    F = ilu0_factor(C)
    r = rng.standard_normal(30)
    np.testing.assert_allclose(ilu0_solve(F, r), np.linalg.solve(A, r), rtol=1e-10)


def test_ilu0_diagonal():
    d = np.arange(1.0, 6.0)
    F = ilu0_factor(CsrMatrix.from_dense(np.diag(d)))
    np.testing.assert_allclose(ilu0_solve(F, np.ones(5)), 1 / d)


def test_ilu0_zero_pivot():
    A = CsrMatrix.from_dense(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(ZeroPivotError) as exc:
        ilu0_factor(A)
    assert exc.value.row == 1


def test_trisolve_oracle(spd):
    F = ilu0_factor(spd)
    r = np.random.default_rng(6).standard_normal(spd.n_rows)
    f = FlopCounter()
    z = ilu0_solve(F, r, f)
    L, U = F.lower().toarray(), F.upper().toarray()
    ref = scipy.linalg.solve_triangular(U, scipy.linalg.solve_triangular(L, r, lower=True, unit_diagonal=True))
    np.testing.assert_allclose(z, ref, rtol=1e-10, atol=1e-12)
    assert f["trisolve"] == 2 * spd.nnz


@pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
def test_ilu_estimate_cpm1_formula(p):
    s = make_space(p, 2 * p + 1, "cpm1", periodic=True)
    A = assemble(s, "mass")
    per_row = 32 * p**6 + 96 * p**5 + 120 * p**4 + 76 * p**3 + 24 * p**2 + 3 * p
    assert ilu0_flop_estimate(A, lower=lattice_lower_mask(s, A)) == s.N * per_row


def test_ilu_estimate_is_m_choose_2_at_p1():
    s = make_space(1, 4, "cpm1", periodic=True)
    A = assemble(s, "mass")
    assert ilu0_flop_estimate(A, lower=lattice_lower_mask(s, A)) == s.N * 27 * 26 // 2


def test_natural_order_estimate_exceeds_lattice_split():
    # sum_k U_k (1 + 2 U_k) with sum U_k fixed is minimal only for equal U_k
    s = make_space(1, 4, "cpm1", periodic=True)
    A = assemble(s, "mass")
    assert ilu0_flop_estimate(A) == 28288 > s.N * 351


def test_lattice_split_on_open_grid_is_triangular():
    s = make_space(2, 3, "c0")
    A = assemble(s)
    rows = np.repeat(np.arange(A.n_rows), A.row_lengths())
    np.testing.assert_array_equal(lattice_lower_mask(s, A), A.indices < rows)


def test_lattice_split_requires_long_period():
    s = make_space(2, 2, "c0", periodic=True)
    with pytest.raises(ValueError):
        lattice_lower_mask(s, assemble(s))


def test_actual_flops_bounded_by_estimate(spd, assembled):
    for A in (spd, assembled, assemble(make_space(2, 3, "c0", periodic=True), "mass")):
        f = FlopCounter()
        F = ilu0_factor(A, f)
        assert F.actual_flops <= F.estimate_flops
        assert f["ilu_setup"] == F.actual_flops and f["ilu_estimate"] == F.estimate_flops


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5), st.integers(0, 10**6))
def test_kron_matches_scipy(nx, ny, nz, seed):
    rng = np.random.default_rng(seed)
    mats = [sp.random(n, n + 1, density=0.6, random_state=rng, format="csr") for n in (nx, ny, nz)]
    for m in mats:
        m.sort_indices()
    C = kron_csr(mats, [tuple(m.data for m in mats)])
    ref = sp.kron(mats[2], sp.kron(mats[1], mats[0]))
    np.testing.assert_allclose(C.toarray(), ref.toarray(), atol=1e-14)


def test_kron_pattern_only():
    P = sp.csr_matrix(np.array([[1.0, 1.0, 0], [1, 1, 1], [0, 1, 1]]))
    C = kron_csr([P, P])
    assert C.nnz == 49 and C.shape == (9, 9)


def test_block_helpers(assembled):
    A = assembled
    dofs = np.array([[0, 1, 5, -1], [2, 3, 4, 6]])
    blocks = gather_blocks(A, dofs)
    dense = A.toarray()
    np.testing.assert_allclose(blocks[1], dense[np.ix_(dofs[1], dofs[1])])
    np.testing.assert_allclose(blocks[0, :3, :3], dense[np.ix_([0, 1, 5], [0, 1, 5])])
    assert blocks[0, 3, 3] == 1.0 and blocks[0, 3, :3].sum() == 0
    pos = block_positions(A, dofs)
    out = np.zeros(A.nnz)
    scatter_blocks(out, pos, blocks, sign=2.0)
    pat = dense != 0
    acc = np.zeros_like(dense)
    for d, b in zip(dofs, blocks):
        k = d >= 0
        acc[np.ix_(d[k], d[k])] += 2 * b[np.ix_(k, k)] * pat[np.ix_(d[k], d[k])]
    np.testing.assert_allclose(A.with_data(out).toarray(), acc)


def test_matrix_market_roundtrip(tmp_path, assembled):
    from igacost.sparsekit import write_matrix_market

    path = tmp_path / "a.mtx"
    write_matrix_market(path, assembled)
    B = read_matrix_market(path)
    np.testing.assert_allclose(B.toarray(), assembled.toarray(), rtol=1e-15)


def _block_parts(A, starts):
    diag = block_diagonal(A, starts)
    return diag, np.linalg.inv(diag)


def test_inode_blocks_c0():
    A = assemble(make_space(3, 2, "c0"), "mass")
    starts = inode_blocks(A)
    assert starts[0] == 0 and starts[-1] == A.n_rows
    assert np.diff(starts).max() <= 5 and np.diff(starts).max() > 1
    P = A
    for a, b in zip(starts[:-1], starts[1:]):
        cols = {tuple(P.indices[P.indptr[i]:P.indptr[i + 1]]) for i in range(a, b)}
        assert len(cols) == 1
    assert np.array_equal(inode_blocks(A, limit=1), np.arange(A.n_rows + 1))
    with pytest.raises(ValueError):
        inode_blocks(A, limit=0)


def test_block_ssor_unit_blocks_is_pointwise(assembled):
    starts = np.arange(assembled.n_rows + 1)
    r = np.random.default_rng(5).standard_normal(assembled.n_rows)
    z = block_ssor_apply(assembled, r, 1.2, starts, *_block_parts(assembled, starts))
    np.testing.assert_allclose(z, ssor_apply(assembled, r, 1.2), rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("omega", [1.0, 1.4])
def test_block_ssor_oracle(omega):
    A = assemble(make_space(3, 2, "c0"), "mass")
    starts = inode_blocks(A)
    a = A.toarray()
    D = np.zeros_like(a)
    for s, e in zip(starts[:-1], starts[1:]):
        D[s:e, s:e] = a[s:e, s:e]
    L = np.tril(a - D)
    U = np.triu(a - D)
    M = (D / omega + L) @ np.linalg.inv(D) @ (D / omega + U) * (omega / (2 - omega))
    r = np.random.default_rng(6).standard_normal(len(a))
    f = FlopCounter()
    z = block_ssor_apply(A, r, omega, starts, *_block_parts(A, starts), f)
    np.testing.assert_allclose(M @ z, r, rtol=1e-9, atol=1e-9)
    sq = int(np.sum(np.diff(starts) ** 2))
    assert f["ssor"] == 2 * (A.nnz - sq) + 6 * sq
    Minv = np.column_stack([block_ssor_apply(A, e, omega, starts, *_block_parts(A, starts)) for e in np.eye(len(a))])
    np.testing.assert_allclose(Minv, Minv.T, atol=1e-9 * abs(Minv).max())
    assert np.linalg.eigvalsh((Minv + Minv.T) / 2).min() > 0
