"""Positive-definite factorizations and structured covariance solves."""

from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from disk.errors import InputError, NumericalError

JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4)
LOG_2PI = float(np.log(2.0 * np.pi))


class CholResult(NamedTuple):
    factor: np.ndarray
    jitter: float


def chol_psd(M, scale=1.0):
    """Lower Cholesky factor of ``M + jitter * I``.

    The jitter starts at zero and climbs ``JITTER_LADDER`` (times ``scale``)
    until the factorization succeeds.

    Parameters
    ----------
    M : (n, n) array
        Symmetric matrix; asymmetry above 1e-10 relative is rejected.
    scale : float
        Magnitude the jitter ladder is relative to, usually the partial sill.

    Returns
    -------
    CholResult
        ``(factor, jitter)`` with ``factor @ factor.T == M + jitter * I``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"chol_psd needs a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries")
    norm = np.max(np.abs(M)) if M.size else 0.0
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-10 * max(norm, 1e-300):
        raise InputError("matrix is not symmetric within 1e-10 relative")
    n = M.shape[0]
    for step in JITTER_LADDER:
        jitter = step * scale
        A = M + jitter * np.eye(n) if jitter else M
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return CholResult(L, jitter)
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    raise NumericalError(
        f"Cholesky failed at maximum jitter {JITTER_LADDER[-1] * scale:.3g}: "
        f"n={n}, min eig={eig[0]:.3g}, max eig={eig[-1]:.3g}, "
        f"cond={abs(eig[-1]) / max(abs(eig[0]), 1e-300):.3g}"
    )


def tri_solve(L, B, trans=False):
    return sla.solve_triangular(L, B, lower=True, trans=1 if trans else 0,
                                check_finite=False)


def chol_solve(L, B):
    return sla.cho_solve((L, True), B, check_finite=False)


class DenseCov:
    """Dense SPD covariance handled through its Cholesky factor."""

    def __init__(self, M, scale=1.0):
        self.factor, self.jitter = chol_psd(M, scale)
        self.dim = M.shape[0]
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.factor))))

    def solve(self, B):
        return chol_solve(self.factor, B)

    def quad(self, r):
        z = tri_solve(self.factor, r)
        return float(z @ z)


class LowRankCov:
    """Covariance ``diag(d) + U U^T`` handled by the Woodbury identity.

    Every operation costs O(m r^2) for ``U`` of shape (m, r).
    """

    def __init__(self, U, d):
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise NumericalError("low-rank covariance needs a positive diagonal")
        self.U = U
        self.d = d
        self.dim = d.shape[0]
        self.DiU = U / d[:, None]
        G = np.eye(U.shape[1]) + U.T @ self.DiU
        # G >= I, so no jitter is ever required here
        self.G_factor = np.linalg.cholesky(G)
        self.jitter = 0.0
        self.logdet = (2.0 * float(np.sum(np.log(np.diag(self.G_factor))))
                       + float(np.sum(np.log(d))))

    def solve(self, B):
        DiB = B / self.d[:, None] if B.ndim == 2 else B / self.d
        return DiB - self.DiU @ chol_solve(self.G_factor, self.U.T @ DiB)

    def quad(self, r):
        z = tri_solve(self.G_factor, self.U.T @ (r / self.d))
        return float(r @ (r / self.d) - z @ z)

    def dense(self):
        return np.diag(self.d) + self.U @ self.U.T


def gaussian_logpdf(cov, r):
    """Log N(r | 0, cov) for a ``DenseCov`` or ``LowRankCov``."""
    return -0.5 * (cov.dim * LOG_2PI + cov.logdet + cov.quad(r))
