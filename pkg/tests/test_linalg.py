import numpy as np
import pytest

from mirrormh.errors import NotPositiveDefinite, NotSymmetric, SingularTriangular
from mirrormh.linalg import (
    BlockPartition,
    cholesky_lower,
    invert_spd,
    regularize_covariance,
    solve_lower,
    solve_upper,
)


def random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + d * np.eye(d)


def test_cholesky_identity():
    assert np.array_equal(cholesky_lower(np.eye(3)), np.eye(3))


def test_cholesky_two_by_two_example():
    sigma = np.array([[1.0, 1.8], [1.8, 4.0]])
    chol = cholesky_lower(sigma)
    assert np.allclose(chol, [[1.0, 0.0], [1.8, 0.8718]], atol=5e-5)
    rel = np.linalg.norm(chol @ chol.T - sigma) / np.linalg.norm(sigma)
    assert rel < 1e-8


def test_cholesky_rejects_indefinite_with_pivot():
    with pytest.raises(NotPositiveDefinite) as exc:
        cholesky_lower([[1.0, 2.0], [2.0, 1.0]])
    assert exc.value.pivot == 1


def test_cholesky_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        cholesky_lower([[1.0, 0.5], [0.1, 1.0]])


def test_cholesky_reconstructs_random_spd():
    rng = np.random.default_rng(1)
    for d in (1, 2, 5, 20):
        sigma = random_spd(rng, d)
        chol = cholesky_lower(sigma)
        assert np.allclose(chol, np.tril(chol))
        assert np.all(np.diag(chol) > 0)
        rel = np.linalg.norm(chol @ chol.T - sigma) / np.linalg.norm(sigma)
        assert rel < 1e-8


def test_invert_spd_identity_and_diagonal():
    assert np.allclose(invert_spd(np.eye(2)), np.eye(2))
    omega = invert_spd(np.diag([4.0, 9.0]))
    assert np.allclose(omega, np.diag([0.25, 1.0 / 9.0]))


def test_invert_spd_residual():
    rng = np.random.default_rng(2)
    sigma = random_spd(rng, 5)
    omega = invert_spd(sigma)
    assert np.abs(omega @ sigma - np.eye(5)).max() < 1e-6
    assert np.allclose(omega, omega.T)


def test_solve_lower_examples():
    assert np.allclose(solve_lower(np.eye(2), [1.0, 2.0]), [1.0, 2.0])
    x = solve_lower([[2.0, 0.0], [1.0, 1.0]], [2.0, 2.0])
    assert np.allclose(x, [1.0, 1.0])


def test_solve_triangular_residual_and_roundtrip():
    rng = np.random.default_rng(3)
    chol = np.tril(rng.standard_normal((10, 10))) + 10 * np.eye(10)
    b = rng.standard_normal(10)
    x = solve_lower(chol, b)
    assert np.linalg.norm(chol @ x - b) / np.linalg.norm(b) < 1e-10
    for _ in range(5):
        x = rng.standard_normal(10)
        assert np.abs(solve_lower(chol, chol @ x) - x).max() < 1e-9
        assert np.abs(solve_upper(chol.T, chol.T @ x) - x).max() < 1e-9


def test_solve_rejects_zero_diagonal():
    bad = np.array([[1.0, 0.0], [3.0, 0.0]])
    with pytest.raises(SingularTriangular):
        solve_lower(bad, [1.0, 1.0])
    with pytest.raises(SingularTriangular):
        solve_upper(bad.T, [1.0, 1.0])


def test_regularize_covariance_repairs_singular():
    sigma = np.array([[1.0, 1.0], [1.0, 1.0]])  # rank 1
    with pytest.raises(NotPositiveDefinite):
        cholesky_lower(sigma)
    cholesky_lower(regularize_covariance(sigma))


def test_block_partition():
    part = BlockPartition((1, 1, 3))
    assert part.dim == 5
    assert part.n_blocks == 3
    assert part.n_random == 2
    assert part.slices() == [slice(0, 1), slice(1, 2), slice(2, 5)]
    with pytest.raises(ValueError):
        BlockPartition((1, 0))
    with pytest.raises(ValueError):
        BlockPartition(())
