"""Covariance kernels, predictive-process projections and FITC blocks.

Locations are ``(n, d)`` float arrays; a single location may be passed as a
length-``d`` vector.  All kernels are isotropic in Euclidean distance and
exclude the nugget.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from disk.errors import InputError, NumericalError
from disk.linalg import chol_psd, tri_solve

FAMILIES = ("exponential", "squared_exponential", "matern")
MATERN_NU = (0.5, 1.5, 2.5)
DELTA_TOL = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    family: str = "exponential"
    nu: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}")
        if self.family == "matern":
            if self.nu is None or self.nu <= 0:
                raise InputError("Matern kernels need a positive smoothness nu")
            if not any(np.isclose(self.nu, v) for v in MATERN_NU):
                raise InputError("Matern smoothness must be one of 1/2, 3/2, 5/2")


@dataclass(frozen=True)
class CovParams:
    """Partial sill, nugget and decay of the spatial process."""

    sigma2: float
    tau2: float
    phi: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.tau2 > 0 and self.phi > 0):
            raise InputError(f"covariance parameters must be positive: {self}")

    def as_array(self):
        return np.array([self.sigma2, self.tau2, self.phi])


def as_locations(S):
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[None, :]
    if S.ndim != 2 or S.shape[0] == 0:
        raise InputError(f"locations must be a non-empty (n, d) array, got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InputError("locations must be finite")
    return S


def correlation(spec, phi, dist):
    """Correlation at distance ``dist`` for decay ``phi``."""
    h = phi * np.asarray(dist, dtype=float)
    if spec.family == "exponential":
        return np.exp(-h)
    if spec.family == "squared_exponential":
        return np.exp(-h * h)
    if np.isclose(spec.nu, 0.5):
        return np.exp(-h)
    if np.isclose(spec.nu, 1.5):
        return (1.0 + h) * np.exp(-h)
    return (1.0 + h + h * h / 3.0) * np.exp(-h)


def kernel_matrix(spec, params, A, B):
    A, B = as_locations(A), as_locations(B)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return params.sigma2 * correlation(spec, params.phi, cdist(A, B))


def kernel_value(spec, params, s1, s2):
    s1, s2 = np.asarray(s1, dtype=float), np.asarray(s2, dtype=float)
    if s1.shape != s2.shape:
        raise InputError(f"dimension mismatch: {s1.shape} vs {s2.shape}")
    return float(kernel_matrix(spec, params, s1, s2)[0, 0])


class StationaryKernel:
    """``kernel(A, B)`` callable for a fixed spec and parameter set."""

    def __init__(self, spec, params):
        self.spec = spec
        self.params = params

    def __call__(self, A, B):
        return kernel_matrix(self.spec, self.params, A, B)

    def diag(self, A):
        return np.full(as_locations(A).shape[0], self.params.sigma2)


def check_knots(knots):
    knots = as_locations(knots)
    if knots.shape[0] > 1:
        gaps = cdist(knots, knots)
        gaps[np.diag_indices_from(gaps)] = np.inf
        if gaps.min() <= 1e-12:
            raise InputError("knots must be pairwise distinct")
    return knots


class KnotProjection:
    """Whitened projection onto the knot span.

    With ``L0 L0^T = C(S0)`` the basis of a location set ``S`` is
    ``U = C(S, S0) L0^{-T}``, so ``Q(S, S') = U U'^T`` and the FITC diagonal
    correction is ``delta = diag C(S, S) - rowsum(U**2)``.
    """

    def __init__(self, spec, params, knots):
        knots = check_knots(knots)
        self.spec, self.params, self.knots = spec, params, knots
        C00 = kernel_matrix(spec, params, knots, knots)
        self.factor, self.jitter = chol_psd(C00, params.sigma2)

    @property
    def rank(self):
        return self.knots.shape[0]

    def basis(self, S):
        C0s = kernel_matrix(self.spec, self.params, self.knots, S)
        return tri_solve(self.factor, C0s).T

    def delta(self, U):
        delta = self.params.sigma2 - np.einsum("ij,ij->i", U, U)
        if delta.min(initial=0.0) < -DELTA_TOL * self.params.sigma2:
            raise NumericalError(
                f"FITC diagonal correction {delta.min():.3g} is negative; "
                "knot Gram inversion is broken"
            )
        return np.maximum(delta, 0.0)


def mpp_cov(spec, params, knots, s1, s2):
    """Modified predictive process covariance between two locations."""
    proj = KnotProjection(spec, params, knots)
    S = np.vstack([as_locations(s1), as_locations(s2)])
    U = proj.basis(S)
    value = float(U[0] @ U[1])
    if np.array_equal(S[0], S[1]):
        value += float(proj.delta(U[:1])[0])
    return value


class FitcBlocks(NamedTuple):
    Q_jj: np.ndarray
    Ctilde_jj: np.ndarray
    Ctilde_jstar: np.ndarray
    Ctilde_starstar: np.ndarray


def fitc_blocks(spec, params, knots, S_j, S_star):
    """Dense FITC blocks for a training set and a prediction set."""
    proj = KnotProjection(spec, params, knots)
    Uj, Us = proj.basis(S_j), proj.basis(S_star)
    Q_jj = Uj @ Uj.T
    Q_ss = Us @ Us.T
    return FitcBlocks(
        Q_jj=Q_jj,
        Ctilde_jj=Q_jj + np.diag(proj.delta(Uj)),
        Ctilde_jstar=Uj @ Us.T,
        Ctilde_starstar=Q_ss + np.diag(proj.delta(Us)),
    )


def modified_kernel_matrix(spec, params, Sigma_beta, X1, X2, A, B):
    """Covariance of ``x(s)^T beta + w(s)`` with ``beta ~ N(., Sigma_beta)``."""
    X1, X2 = np.atleast_2d(X1), np.atleast_2d(X2)
    Sigma_beta = np.atleast_2d(np.asarray(Sigma_beta, dtype=float))
    if X1.shape[1] != Sigma_beta.shape[0] or X2.shape[1] != Sigma_beta.shape[1]:
        raise InputError("predictor and Sigma_beta dimensions do not conform")
    return X1 @ Sigma_beta @ X2.T + kernel_matrix(spec, params, A, B)


def modified_kernel(spec, params, Sigma_beta, x1, x2, s1, s2):
    return float(modified_kernel_matrix(spec, params, Sigma_beta, x1, x2, s1, s2)[0, 0])
