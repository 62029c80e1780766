import numpy as np
import pytest

from marsopt.numkit import RngStream
from marsopt.spectral import newton_schulz_orthogonalize, polar_factor, svd


def random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.gauss_matrix(n, n))
    return q * np.sign(np.diag(r))


def test_svd_identity():
    res = svd(np.eye(3))
    np.testing.assert_allclose(res.s, np.ones(3), atol=1e-14)


def test_svd_diagonal():
    res = svd(np.diag([3.0, 2.0]))
    np.testing.assert_allclose(res.s, [3.0, 2.0], atol=1e-14)
    # factors are signed permutations for diagonal input
    np.testing.assert_allclose(np.abs(res.u), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(np.abs(res.v), np.eye(2), atol=1e-14)


@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (8, 8)])
def test_svd_reconstruction_and_invariants(shape):
    rng = RngStream(11)
    m = rng.gauss_matrix(*shape)
    res = svd(m)
    k = min(shape)
    assert np.linalg.norm(res.u.T @ res.u - np.eye(k)) <= 1e-10
    assert np.linalg.norm(res.v.T @ res.v - np.eye(k)) <= 1e-10
    assert np.all(np.diff(res.s) <= 0) and np.all(res.s >= 0)
    assert np.linalg.norm(res.reconstruct() - m) <= 1e-10 * max(1.0, np.linalg.norm(m))


def test_svd_rejects_bad_input():
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        svd(np.ones(3))


def test_polar_factor_of_orthogonal_is_identity_map():
    q = random_orthogonal(4, RngStream(0))
    np.testing.assert_allclose(polar_factor(q), q, atol=1e-12)


def test_polar_factor_positive_diagonal():
    np.testing.assert_allclose(polar_factor(np.diag([2.0, 5.0])), np.eye(2), atol=1e-12)


def test_polar_factor_scale_invariance():
    rng = RngStream(4)
    m = rng.gauss_matrix(4, 4) + 2.0 * np.eye(4)
    base = polar_factor(m)
    for c in (3.7, 1e-3, 1e3):
        np.testing.assert_allclose(polar_factor(c * m), base, atol=1e-10)


def test_polar_factor_zero_matrix_rejected():
    with pytest.raises(ValueError, match="polar factor undefined"):
        polar_factor(np.zeros((3, 3)))


def test_polar_factor_unknown_method():
    with pytest.raises(ValueError):
        polar_factor(np.eye(2), method="sketch")


def test_newton_schulz_orthogonal_input():
    # the Frobenius pre-scale shrinks an orthogonal matrix to 1/sqrt(n) of a
    # fixed point, so convergence takes a handful of cubic steps, not one
    q = random_orthogonal(3, RngStream(1))
    report = newton_schulz_orthogonalize(q, tol=1e-12, max_iter=30)
    assert report.converged
    assert report.residual <= 1e-12
    assert report.iterations <= 12
    np.testing.assert_allclose(report.o, q, atol=1e-10)


def test_newton_schulz_matches_svd_polar():
    m = np.diag([1.0, 0.1])
    report = newton_schulz_orthogonalize(m, tol=1e-8, max_iter=30)
    assert report.converged
    np.testing.assert_allclose(report.o, polar_factor(m, method="svd"), atol=1e-8)
    np.testing.assert_allclose(report.o, np.eye(2), atol=1e-8)


def test_newton_schulz_rank_deficient():
    # rank-1 input converges on its range to u v^T / (|u||v|); the full
    # orthogonality residual stays at sqrt(n-1) so the flag remains false
    rng = RngStream(2)
    u = rng.gauss(5)
    v = rng.gauss(4)
    m = np.outer(u, v)
    report = newton_schulz_orthogonalize(m, tol=1e-8, max_iter=50)
    target = np.outer(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    assert np.max(np.abs(report.o - target)) <= 1e-6
    assert not report.converged
    # orthogonality defect restricted to the rank-1 subspace
    w = v / np.linalg.norm(v)
    assert np.linalg.norm(report.o.T @ (report.o @ w) - w) <= 1e-6


def test_newton_schulz_wide_matrix_transposed_condition():
    rng = RngStream(3)
    m = rng.gauss_matrix(3, 6)
    report = newton_schulz_orthogonalize(m, tol=1e-9, max_iter=50)
    assert report.converged
    o = report.o
    assert np.linalg.norm(o @ o.T - np.eye(3)) <= 1e-9


@pytest.mark.parametrize("shape", [(6, 6), (8, 5), (5, 8)])
def test_paths_agree_on_well_conditioned_input(shape):
    rng = RngStream(9)
    # build condition number <= 1e3 explicitly from an SVD sandwich
    k = min(shape)
    sing = np.geomspace(1.0, 1e-3, k)
    a = random_orthogonal(shape[0], rng)[:, :k]
    b = random_orthogonal(shape[1], rng)[:, :k]
    m = (a * sing) @ b.T
    o_svd = polar_factor(m, method="svd")
    o_ns = polar_factor(m, method="newton_schulz", tol=1e-9, max_iter=60)
    assert np.max(np.abs(o_svd - o_ns)) <= 1e-6


def test_newton_schulz_nonconvergence_reported_and_raised():
    m = np.diag([1.0, 1e-6])  # too ill-conditioned for a 3-iteration budget
    report = newton_schulz_orthogonalize(m, tol=1e-10, max_iter=3)
    assert not report.converged
    with pytest.raises(RuntimeError, match="residual"):
        polar_factor(m, method="newton_schulz", tol=1e-10, max_iter=3)


def test_projection_defect_vanishes_on_rank_deficient_limit():
    rng = RngStream(12)
    m = np.outer(rng.gauss(4), rng.gauss(3))
    report = newton_schulz_orthogonalize(m, tol=1e-9, max_iter=50)
    assert not report.converged           # full residual stuck at sqrt(codim)
    assert report.projection_defect <= 1e-9   # but the iterate is a partial isometry
    full = newton_schulz_orthogonalize(np.diag([1.0, 0.5]), tol=1e-9, max_iter=50)
    assert full.converged and full.projection_defect <= 1e-9
