"""Data containers, priors and the tempered marginal likelihood.

The response model is ``y = X beta + w(s) + eps`` with ``w`` a zero-mean GP
(full rank) or its modified predictive process (low rank), and
``eps ~ N(0, tau2 I)``.  A subset likelihood raised to the power
``exponent = n / m_j`` is what the subset samplers target.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from disk.errors import InputError, NumericalError
from disk.kernels import (DELTA_TOL, CovParams, KernelSpec, as_locations,
                          check_knots, correlation)
from disk.linalg import DenseCov, LowRankCov, chol_psd, gaussian_logpdf, tri_solve

VARIANTS = ("full", "mpp")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    locations: np.ndarray
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        S = _frozen(as_locations(self.locations))
        X = np.asarray(self.X, dtype=float)
        X = _frozen(X[:, None] if X.ndim == 1 else X)
        y = _frozen(np.ravel(self.y))
        n = S.shape[0]
        if X.shape[0] != n or y.shape[0] != n:
            raise InputError(f"rows disagree: {n} locations, X {X.shape}, y {y.shape}")
        if X.shape[1] >= n:
            raise InputError(f"need p < n, got p={X.shape[1]}, n={n}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("design and responses must be finite")
        object.__setattr__(self, "locations", S)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def dim(self):
        return self.locations.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return SpatialDataset(self.locations[rows], self.X[rows], self.y[rows])


@dataclass(frozen=True, eq=False)
class PriorSpec:
    mu_beta: np.ndarray
    Sigma_beta: np.ndarray
    a_sigma: float = 2.0
    b_sigma: float = 2.0
    a_tau: float = 2.0
    b_tau: float = 0.1
    phi_lo: float = 0.01
    phi_hi: float = 30.0
    Sigma_beta_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = _frozen(np.ravel(self.mu_beta))
        Sb = _frozen(np.atleast_2d(self.Sigma_beta))
        if Sb.shape != (mu.size, mu.size):
            raise InputError("Sigma_beta must be p x p with p = len(mu_beta)")
        if not np.allclose(Sb, Sb.T):
            raise InputError("Sigma_beta must be symmetric")
        if np.linalg.eigvalsh(Sb)[0] <= 0:
            raise InputError("Sigma_beta must be positive definite")
        if min(self.a_sigma, self.b_sigma, self.a_tau, self.b_tau) <= 0:
            raise InputError("inverse-gamma shapes and scales must be positive")
        if not 0 < self.phi_lo < self.phi_hi:
            raise InputError("need 0 < phi_lo < phi_hi")
        object.__setattr__(self, "mu_beta", mu)
        object.__setattr__(self, "Sigma_beta", Sb)
        object.__setattr__(self, "Sigma_beta_inv", _frozen(np.linalg.inv(Sb)))

    @classmethod
    def default(cls, p, **kw):
        """N(0, 100 I) on beta, IG(2, 2) on sigma2, IG(2, 0.1) on tau2."""
        return cls(mu_beta=np.zeros(p), Sigma_beta=100.0 * np.eye(p), **kw)

    @property
    def p(self):
        return self.mu_beta.size

    def in_support(self, alpha):
        return self.phi_lo <= alpha.phi <= self.phi_hi


@dataclass(frozen=True, eq=False)
class ModelConfig:
    prior: PriorSpec
    kernel: KernelSpec = KernelSpec()
    variant: str = "full"
    knots: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "mpp":
            if self.knots is None:
                raise InputError("the MPP variant needs a knot set")
            object.__setattr__(self, "knots", _frozen(check_knots(self.knots)))

    @property
    def rank(self):
        return None if self.knots is None else self.knots.shape[0]


class CovBuilder:
    """Covariances for one location set under changing ``alpha``.

    Pairwise distances (training, knots and optional prediction locations)
    are computed once, so each new ``alpha`` only costs kernel evaluations
    and factorizations.
    """

    def __init__(self, config, locations, predict_at=None):
        self.config = config
        self.kernel = config.kernel
        S = as_locations(locations)
        P = None if predict_at is None else as_locations(predict_at)
        if config.variant == "full":
            self.D = cdist(S, S)
            if P is not None:
                self.D_ps = cdist(P, S)
                self.D_pp = cdist(P, P)
        else:
            K = config.knots
            self.D_00 = cdist(K, K)
            self.D_0s = cdist(K, S)
            if P is not None:
                self.D_0p = cdist(K, P)
        self.n_pred = 0 if P is None else P.shape[0]

    def _cov(self, alpha, D):
        return alpha.sigma2 * correlation(self.kernel, alpha.phi, D)

    def knot_basis(self, alpha):
        """``(L0, jitter, U, delta)`` for the training locations."""
        L0, jitter = chol_psd(self._cov(alpha, self.D_00), alpha.sigma2)
        U = tri_solve(L0, self._cov(alpha, self.D_0s)).T
        return L0, jitter, U, _fitc_delta(alpha, U)

    def predict_basis(self, alpha, L0):
        U = tri_solve(L0, self._cov(alpha, self.D_0p)).T
        return U, _fitc_delta(alpha, U)

    def response_cov(self, alpha, nugget=None):
        """Covariance of the responses with ``w`` integrated out.

        ``nugget`` defaults to ``alpha.tau2``; the predictive step passes the
        tempered ``tau2 / exponent`` instead.
        """
        nugget = alpha.tau2 if nugget is None else nugget
        if self.config.variant == "full":
            C = self._cov(alpha, self.D)
            C[np.diag_indices_from(C)] += nugget
            return DenseCov(C, alpha.sigma2)
        L0, jitter, U, delta = self.knot_basis(alpha)
        cov = LowRankCov(U, delta + nugget)
        cov.jitter = jitter
        cov.knot_factor = L0
        return cov


def _fitc_delta(alpha, U):
    delta = alpha.sigma2 - np.einsum("ij,ij->i", U, U)
    if delta.min(initial=0.0) < -DELTA_TOL * alpha.sigma2:
        raise NumericalError(f"FITC diagonal correction {delta.min():.3g} is negative")
    return np.maximum(delta, 0.0)


def response_cov(config, locations, alpha, nugget=None):
    """One-off :meth:`CovBuilder.response_cov`."""
    return CovBuilder(config, locations).response_cov(alpha, nugget)


def marginal_loglik(data, beta, alpha, config, exponent=1.0, cov=None):
    """Tempered Gaussian log-likelihood ``exponent * log N(y | X beta, V)``.

    ``V = C + tau2 I`` (full rank) or ``Ctilde + tau2 I`` (MPP).  The
    ``2 pi`` constant is kept, so values compare across ``alpha``.  A
    precomputed ``cov`` from :func:`response_cov` may be passed to skip the
    factorization.
    """
    if exponent <= 0:
        raise InputError("exponent must be positive")
    if cov is None:
        cov = response_cov(config, data.locations, alpha)
    resid = data.y - data.X @ np.asarray(beta, dtype=float)
    return exponent * gaussian_logpdf(cov, resid)


def read_dataset(path, dim=None):
    """Read ``s1..sd, x1..xp, y`` CSV into a dataset."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    s_cols = [i for i, h in enumerate(header) if h.startswith("s")]
    x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
    if header[-1] != "y" or not s_cols or not x_cols:
        raise InputError(f"{path}: header must be s1..sd,x1..xp,y, got {header}")
    if dim is not None and len(s_cols) != dim:
        raise InputError(f"{path}: expected {dim} coordinates, found {len(s_cols)}")
    try:
        values = np.array(rows, dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if values.ndim != 2 or values.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows")
    return SpatialDataset(values[:, s_cols], values[:, x_cols], values[:, -1])


def format_float(v):
    return repr(float(v))


def write_dataset(path, data):
    header = ([f"s{i + 1}" for i in range(data.dim)]
              + [f"x{i + 1}" for i in range(data.p)] + ["y"])
    block = np.column_stack([data.locations, data.X, data.y])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in block:
            w.writerow([format_float(v) for v in row])


__all__ = [
    "CovBuilder",
    "CovParams",
    "ModelConfig",
    "PriorSpec",
    "SpatialDataset",
    "marginal_loglik",
    "read_dataset",
    "response_cov",
    "write_dataset",
]
