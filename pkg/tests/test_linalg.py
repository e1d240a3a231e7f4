import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from diffband.linalg import (DimensionMismatch, IndexOutOfRange, MaxItersExceeded, SparseMatrix,
                             ZeroDiagonal, from_triplets, matvec, solve_gmres)

triplets = st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9), st.floats(-5, 5)),
                    max_size=60)


@settings(max_examples=60, deadline=None)
@given(entries=triplets)
def test_triplets_accumulate_like_dense(entries):
    A = from_triplets(10, entries)
    D = np.zeros((10, 10))
    for i, j, v in entries:
        D[i, j] += v
    assert np.allclose(A.toarray(), D, atol=1e-13)
    for i in range(10):
        row = A.indices[A.offsets[i]:A.offsets[i + 1]]
        assert np.all(np.diff(row) > 0)


def test_empty_and_duplicates():
    A = from_triplets(3, [])
    assert np.all(A.matvec(np.ones(3)) == 0)
    B = from_triplets(2, [(0, 0, 1.0), (0, 0, 2.0)])
    assert B.nnz == 1 and B.toarray()[0, 0] == 3.0


def test_index_and_dimension_errors():
    with pytest.raises(IndexOutOfRange):
        from_triplets(2, [(2, 0, 1.0)])
    A = from_triplets(2, [(0, 0, 1.0), (1, 1, 1.0)])
    with pytest.raises(DimensionMismatch):
        matvec(A, np.ones(3))


def test_matvec_random_dense():
    rng = np.random.default_rng(0)
    D = rng.normal(size=(50, 50)) * (rng.uniform(size=(50, 50)) < 0.2)
    A = SparseMatrix.from_scipy(D)
    x = rng.normal(size=50)
    assert np.abs(A.matvec(x) - D @ x).max() < 1e-13
    assert np.abs(A.transpose_matvec(x) - D.T @ x).max() < 1e-13


def test_identity_and_two_by_two():
    x, stats = solve_gmres(SparseMatrix.from_scipy(sp.eye(7)), np.arange(7.0))
    assert np.array_equal(x, np.arange(7.0)) and stats.iterations <= 1
    A = SparseMatrix.from_scipy(np.array([[4.0, 1.0], [1.0, 3.0]]))
    x, _ = solve_gmres(A, np.array([1.0, 2.0]))
    assert np.allclose(x, [1 / 11, 7 / 11], atol=1e-12)


def test_zero_rhs_and_zero_diagonal():
    A = SparseMatrix.from_scipy(np.array([[2.0, 0.0], [0.0, 3.0]]))
    x, stats = solve_gmres(A, np.zeros(2))
    assert not x.any() and stats.converged
    with pytest.raises(ZeroDiagonal):
        solve_gmres(SparseMatrix.from_scipy(np.array([[0.0, 1.0], [1.0, 0.0]])), np.ones(2))


@pytest.mark.parametrize("side", ["left", "right"])
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_residual_contract_on_random_nonsymmetric_systems(side, seed):
    rng = np.random.default_rng(seed)
    n = 60
    D = sp.random(n, n, density=0.1, random_state=np.random.RandomState(seed % 2 ** 32)).toarray()
    D += np.diag(rng.uniform(1, 10, n)) * n ** 0.5
    A = SparseMatrix.from_scipy(D)
    b = rng.normal(size=n)
    x, stats = solve_gmres(A, b, side=side, restart=10)
    assert np.linalg.norm(b - D @ x) <= 1e-10 * np.linalg.norm(b) * 1.0001
    assert stats.converged


def test_left_scaling_controls_badly_scaled_rows():
    # rows scaled by 1e-12 carry a residual the unscaled norm cannot see
    rng = np.random.default_rng(3)
    n = 40
    D = np.diag(rng.uniform(2, 3, n)) + 0.1 * rng.normal(size=(n, n))
    scale = np.where(np.arange(n) < n // 2, 1.0, 1e-12)
    D = scale[:, None] * D
    xe = rng.normal(size=n)
    b = D @ xe
    x, _ = solve_gmres(SparseMatrix.from_scipy(D), b, side="left")
    assert np.abs(x - xe).max() < 1e-8


def test_max_iters_returns_best_iterate():
    rng = np.random.default_rng(1)
    D = rng.normal(size=(30, 30)) + 10 * np.eye(30)
    A = SparseMatrix.from_scipy(D)
    b = rng.normal(size=30)
    with pytest.raises(MaxItersExceeded) as info:
        solve_gmres(A, b, max_iters=2, restart=2)
    assert info.value.x.shape == (30,)
    assert not info.value.stats.converged
    x, stats = solve_gmres(A, b, max_iters=2, restart=2, raise_on_fail=False)
    assert not stats.converged and np.linalg.norm(b - D @ x) < np.linalg.norm(b)


def test_solver_is_deterministic():
    rng = np.random.default_rng(2)
    D = rng.normal(size=(80, 80)) + 12 * np.eye(80)
    A = SparseMatrix.from_scipy(D)
    b = rng.normal(size=80)
    x1, _ = solve_gmres(A, b, restart=5)
    x2, _ = solve_gmres(A, b, restart=5)
    assert np.array_equal(x1, x2)
