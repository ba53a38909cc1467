import numpy as np
import pytest

from disk.errors import InputError, NumericalError
from disk.linalg import DenseCov, LowRankCov, chol_psd, gaussian_logpdf


def test_identity():
    L, jitter = chol_psd(np.eye(4))
    np.testing.assert_array_equal(L, np.eye(4))
    assert jitter == 0.0


def test_rank_deficient_gets_jitter():
    L, jitter = chol_psd(np.ones((2, 2)), scale=2.0)
    assert 0 < jitter <= 1e-4 * 2.0
    np.testing.assert_allclose(L @ L.T, np.ones((2, 2)) + jitter * np.eye(2), atol=1e-14)


def test_reconstruction(rng):
    A = rng.standard_normal((30, 30))
    M = A @ A.T
    L, jitter = chol_psd(M)
    assert jitter == 0.0
    assert np.max(np.abs(L @ L.T - M)) / np.max(np.abs(M)) <= 1e-8


def test_failure_carries_diagnostics():
    with pytest.raises(NumericalError, match="cond"):
        chol_psd(np.diag([1.0, -1.0]))


def test_asymmetric_and_nonsquare_rejected():
    with pytest.raises(InputError):
        chol_psd(np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(InputError):
        chol_psd(np.ones((2, 3)))


def test_low_rank_matches_dense(rng):
    U = rng.standard_normal((40, 5))
    d = rng.uniform(0.1, 1.0, 40)
    lr = LowRankCov(U, d)
    M = np.diag(d) + U @ U.T
    dense = DenseCov(M)
    B = rng.standard_normal((40, 3))
    r = rng.standard_normal(40)
    np.testing.assert_allclose(lr.solve(B), np.linalg.solve(M, B), rtol=1e-9)
    assert lr.logdet == pytest.approx(np.linalg.slogdet(M)[1], rel=1e-12)
    assert lr.quad(r) == pytest.approx(r @ np.linalg.solve(M, r), rel=1e-10)
    assert gaussian_logpdf(lr, r) == pytest.approx(gaussian_logpdf(dense, r), rel=1e-12)
    np.testing.assert_array_equal(lr.dense(), M)


def test_gaussian_logpdf_against_scipy(rng):
    from scipy.stats import multivariate_normal
    A = rng.standard_normal((6, 6))
    M = A @ A.T + np.eye(6)
    r = rng.standard_normal(6)
    assert gaussian_logpdf(DenseCov(M), r) == pytest.approx(
        multivariate_normal(np.zeros(6), M).logpdf(r), rel=1e-12)
