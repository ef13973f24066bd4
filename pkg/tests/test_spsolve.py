import numpy as np
import pytest
import scipy.sparse as sp

from lapdeform.mesh import build_handle_map, cotangent_laplacian, farthest_point_sample
from lapdeform.spsolve import (
    NotPositiveDefiniteError,
    SingularMatrixError,
    SolverError,
    SpdMatrix,
    dense_oracle_solve,
    factorize,
    solve_multi,
)


def deformation_normal_matrix(mesh, k):
    lap = cotangent_laplacian(mesh).matrix
    a = build_handle_map(mesh, farthest_point_sample(mesh, k)).weights
    return (lap.T @ lap).toarray() + a.T @ a


def test_identity_solve():
    f = factorize(np.eye(5))
    b = np.arange(5.0)
    assert np.allclose(f.solve(b), b)


def test_diagonal_solve():
    f = factorize(np.diag([2.0, 4.0]))
    assert np.allclose(f.solve(np.array([2.0, 8.0])), [1.0, 2.0])


def test_tetra_system_residual(tetra):
    w = deformation_normal_matrix(tetra, 2)
    f = factorize(w)
    rng = np.random.default_rng(0)
    b = rng.standard_normal(4)
    x = f.solve(b)
    assert np.abs(w @ x - b).max() <= 1e-8 * np.abs(b).max()
    assert np.allclose(x, dense_oracle_solve(w, b), atol=1e-10)


def test_solve_multi_zero(ico162):
    w = deformation_normal_matrix(ico162, 8)
    f = factorize(w)
    x = solve_multi(f, np.zeros((ico162.n_vertices, 3)))
    assert np.array_equal(x, np.zeros_like(x))


def test_solve_multi_known_solution(ico162):
    w = deformation_normal_matrix(ico162, 8)
    f = factorize(w)
    rng = np.random.default_rng(1)
    g = rng.standard_normal((ico162.n_vertices, 3))
    x = solve_multi(f, w @ g)
    assert np.abs(x - g).max() <= 1e-7 * max(1.0, np.abs(g).max())


def test_solve_multi_columnwise(tetra):
    w = deformation_normal_matrix(tetra, 2)
    f = factorize(w)
    rng = np.random.default_rng(2)
    rhs = rng.standard_normal((4, 3))
    joint = solve_multi(f, rhs)
    for j in range(3):
        assert np.allclose(joint[:, j], f.solve(rhs[:, j]))


def test_solve_multi_dimension_mismatch(tetra):
    f = factorize(deformation_normal_matrix(tetra, 2))
    with pytest.raises(SolverError):
        solve_multi(f, np.zeros((5, 3)))


def test_asymmetric_rejected():
    with pytest.raises(SolverError):
        SpdMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_indefinite_rejected():
    with pytest.raises(NotPositiveDefiniteError):
        factorize(np.diag([1.0, -1.0]))


def test_singular_psd_rejected(ico162):
    # the Laplacian normal matrix alone has the constant nullspace
    lap = cotangent_laplacian(ico162).matrix
    with pytest.raises(NotPositiveDefiniteError):
        factorize((lap.T @ lap).toarray())


def test_dense_oracle_identity():
    rhs = np.arange(6.0).reshape(3, 2)
    assert np.allclose(dense_oracle_solve(np.eye(3), rhs), rhs)


def test_dense_oracle_hand_2x2():
    x = dense_oracle_solve(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([1.0, 1.0]))
    assert np.allclose(x, [1.0 / 3.0, 1.0 / 3.0])


def test_dense_oracle_singular():
    with pytest.raises(SingularMatrixError):
        dense_oracle_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 0.0]))


def test_sparse_vs_dense_random_spd():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((50, 50))
    w = m @ m.T + 50 * np.eye(50)
    b = rng.standard_normal((50, 2))
    x_sparse = solve_multi(factorize(w), b)
    x_dense = dense_oracle_solve(w, b)
    rel = np.abs(x_sparse - x_dense).max() / np.abs(x_dense).max()
    assert rel <= 1e-8


def test_cg_path(ico162):
    w = deformation_normal_matrix(ico162, 8)
    rng = np.random.default_rng(4)
    b = rng.standard_normal((ico162.n_vertices, 3))
    x_chol = solve_multi(factorize(w), b)
    x_cg = solve_multi(factorize(w, method="cg"), b)
    assert np.abs(x_chol - x_cg).max() <= 1e-6 * np.abs(x_chol).max()


def test_spd_for_all_fixture_meshes(tetra, ico162, ico642):
    for mesh, k in ((tetra, 2), (ico162, 8), (ico642, 16)):
        factorize(deformation_normal_matrix(mesh, k))  # must not raise


def test_triplets_sorted():
    m = SpdMatrix(sp.diags([2.0, 3.0, 4.0]).tocsc())
    keys = [(r, c) for r, c, _ in m.triplets()]
    assert keys == sorted(keys)
