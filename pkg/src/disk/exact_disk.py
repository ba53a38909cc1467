"""Closed-form DISK posterior for the known-parameter model and its risk.

With ``beta = 0`` and fixed covariance parameters the subset posterior of
``w(s*)`` is Gaussian, so the DISK posterior is available exactly: its mean
is the average of subset means and its standard deviation the average of
subset standard deviations.  The Bayes L2-risk of that posterior splits into
squared bias, the variance of the averaged mean, and the DISK variance;
:func:`risk_decomposition` estimates each term and the total by Monte Carlo.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from disk import rng as rngs
from disk.errors import InputError
from disk.kernels import KernelSpec, StationaryKernel, as_locations
from disk.linalg import chol_psd, chol_solve

DEFAULT_MU = (1.0, 0.5, 0.5, 0.25, 0.25, 0.125, 0.125, 0.0625)


class DegenerateKernel:
    """Finite-rank kernel ``sum_i mu_i f_i(s) f_i(s')`` on ``[0, 1]^2``.

    Features are tensor cosines ``c_a(s1) c_b(s2)`` with ``c_0 = 1`` and
    ``c_a(x) = sqrt(2) cos(pi a x)``.  They are orthonormal under the uniform
    design, so ``mu`` are the exact eigenvalues of the integral operator.
    """

    FREQS = ((0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2))

    def __init__(self, mu=DEFAULT_MU[:5]):
        mu = np.asarray(mu, dtype=float)
        if mu.ndim != 1 or not 1 <= mu.size <= len(self.FREQS):
            raise InputError(f"rank must be between 1 and {len(self.FREQS)}")
        if np.any(mu <= 0) or np.any(np.diff(mu) > 0):
            raise InputError("eigenvalues must be positive and non-increasing")
        self.mu = mu
        self.freqs = self.FREQS[:mu.size]

    @property
    def rank(self):
        return self.mu.size

    def features(self, S):
        S = as_locations(S)
        if S.shape[1] != 2:
            raise InputError("the degenerate kernel is defined on the plane")
        cols = []
        for a, b in self.freqs:
            ca = 1.0 if a == 0 else np.sqrt(2.0) * np.cos(np.pi * a * S[:, 0])
            cb = 1.0 if b == 0 else np.sqrt(2.0) * np.cos(np.pi * b * S[:, 1])
            cols.append(ca * cb * np.ones(S.shape[0]))
        return np.column_stack(cols)

    def __call__(self, A, B):
        return (self.features(A) * self.mu) @ self.features(B).T

    def diag(self, A):
        F = self.features(A)
        return (F * F) @ self.mu

    def draw_function(self, rng):
        """A function drawn from the GP with this kernel."""
        coef = np.sqrt(self.mu) * rng.standard_normal(self.rank)
        return lambda S: self.features(S) @ coef


def _kernel(kernel, params=None):
    if isinstance(kernel, KernelSpec):
        if params is None:
            raise InputError("covariance parameters are required with a kernel spec")
        return StationaryKernel(kernel, params)
    return kernel


def uniform_square(rng, n):
    return rng.uniform(0.0, 1.0, size=(n, 2))


@dataclass(frozen=True, eq=False)
class ExactDiskResult:
    m_bar: np.ndarray
    v_bar: np.ndarray
    per_subset_v: np.ndarray


def _subset_weights(kernel, S_j, s_star, nugget):
    """``(h, v)`` with ``h = (C_jj + nugget I)^{-1} c_j*`` and ``v`` the variance."""
    C = kernel(S_j, S_j)
    C[np.diag_indices_from(C)] += nugget
    L, _ = chol_psd(C, max(np.mean(np.diag(C)), nugget))
    c = kernel(S_j, s_star)
    h = chol_solve(L, c)
    v = kernel.diag(s_star) - np.einsum("ij,ij->j", c, h)
    return h, np.maximum(v, 0.0)


def disk_gauss_posterior(subsets, s_star, tau2, kernel, params=None):
    """Exact DISK posterior of ``w`` at ``s_star`` from ``k`` subsets.

    Parameters
    ----------
    subsets : sequence of (locations, y)
        Training locations and responses for each subset.
    s_star : array_like
        One location or an ``(l, d)`` array of locations.
    tau2 : float
        Nugget.  Subset ``j`` uses the tempered nugget ``tau2 m_j / n``.
    kernel : KernelSpec or callable
        Either a spec (with ``params``) or any ``kernel(A, B)`` callable with
        a ``diag`` method.
    """
    if not tau2 > 0:
        raise InputError("tau2 must be positive")
    subsets = [(as_locations(S), np.ravel(y)) for S, y in subsets]
    if not subsets:
        raise InputError("need at least one subset")
    for S, y in subsets:
        if S.shape[0] != y.size:
            raise InputError("subset locations and responses disagree")
    kernel = _kernel(kernel, params)
    s_star = as_locations(s_star)
    n = sum(y.size for _, y in subsets)
    k = len(subsets)
    means, sds = np.zeros(s_star.shape[0]), np.zeros(s_star.shape[0])
    v_all = np.empty((k, s_star.shape[0]))
    for j, (S, y) in enumerate(subsets):
        h, v = _subset_weights(kernel, S, s_star, tau2 * y.size / n)
        means += h.T @ y
        sds += np.sqrt(v)
        v_all[j] = v
    return ExactDiskResult(means / k, (sds / k) ** 2, v_all)


@dataclass(frozen=True)
class RiskReport:
    bias2: float
    var_mean: float
    var_disk: float
    total: float
    mc_replicates: int
    mc_standard_error: float
    se_bias2: float = float("nan")
    se_var_mean: float = float("nan")
    se_var_disk: float = float("nan")
    se_components: float = float("nan")
    se_gap: float = float("nan")

    @property
    def components(self):
        return self.bias2 + self.var_mean + self.var_disk

    @property
    def combined_se(self):
        """Standard errors of the total and of the component sum in quadrature."""
        return float(np.hypot(self.mc_standard_error, self.se_components))


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def risk_decomposition(n, k, kernel, tau2, w0, location_sampler=uniform_square,
                       mc_reps=200, seed=0, params=None):
    """Monte Carlo Bayes L2-risk of the exact DISK posterior.

    Each replicate draws ``n`` training locations and one test location from
    ``location_sampler(rng, count)``, splits the training set into ``k``
    consecutive blocks (the draws are exchangeable, so this is a random
    partition), and adds fresh noise to ``w0``.  The three components are
    computed from the noise-free design, and the total is estimated
    separately as ``(m_bar - w0(s*))**2 + v_bar`` using the noisy responses.
    """
    if mc_reps < 2:
        raise InputError("mc_reps must be at least 2")
    if not 1 <= k <= n:
        raise InputError("need 1 <= k <= n")
    if not tau2 > 0:
        raise InputError("tau2 must be positive")
    kernel = _kernel(kernel, params)
    bias2, var_mean, var_disk, total = (np.empty(mc_reps) for _ in range(4))
    blocks = np.array_split(np.arange(n), k)
    for r in range(mc_reps):
        gen = rngs.make_rng(seed, rngs.RISK, n, k, r)
        S = location_sampler(gen, n)
        s_star = location_sampler(gen, 1)
        f = w0(S)
        y = f + np.sqrt(tau2) * gen.standard_normal(n)
        f_star = float(np.ravel(w0(s_star))[0])
        m_noise_free = m_noisy = sd = h_norm = 0.0
        for rows in blocks:
            h, v = _subset_weights(kernel, S[rows], s_star, tau2 * rows.size / n)
            h = h[:, 0]
            m_noise_free += h @ f[rows]
            m_noisy += h @ y[rows]
            h_norm += h @ h
            sd += np.sqrt(v[0])
        v_bar = (sd / k) ** 2
        bias2[r] = (m_noise_free / k - f_star) ** 2
        var_mean[r] = tau2 * h_norm / k**2
        var_disk[r] = v_bar
        total[r] = (m_noisy / k - f_star) ** 2 + v_bar
    b, se_b = _mean_se(bias2)
    vm, se_vm = _mean_se(var_mean)
    vd, se_vd = _mean_se(var_disk)
    t, se_t = _mean_se(total)
    _, se_c = _mean_se(bias2 + var_mean + var_disk)
    _, se_gap = _mean_se(total - (bias2 + var_mean + var_disk))
    return RiskReport(b, vm, vd, t, mc_reps, se_t, se_b, se_vm, se_vd, se_c, se_gap)


def gamma_eff_dim(eigenvalues, a):
    """Effective dimension ``sum mu_i / (mu_i + a)``."""
    mu = np.asarray(eigenvalues, dtype=float).ravel()
    if not a > 0:
        raise InputError("a must be positive")
    if mu.size and mu.min() < -1e-12:
        raise InputError(f"negative eigenvalue {mu.min():.3g}")
    if np.any(np.diff(mu) > 1e-12 * max(1.0, float(np.abs(mu).max(initial=0.0)))):
        raise InputError("eigenvalues must be sorted non-increasing")
    mu = np.maximum(mu, 0.0)
    return float(np.sum(mu / (mu + a)))


def nystrom_eigenvalues(kernel, N, seed=0, location_sampler=uniform_square, params=None):
    """Operator eigenvalues estimated as ``eig(K_N) / N`` on ``N`` design draws."""
    kernel = _kernel(kernel, params)
    S = location_sampler(rngs.make_rng(seed, rngs.RISK, 0, N), N)
    mu = np.linalg.eigvalsh(kernel(S, S))[::-1] / N
    return np.maximum(mu, 0.0)


@dataclass(frozen=True, eq=False)
class RateStudy:
    n_grid: np.ndarray
    k_grid: np.ndarray
    reports: tuple
    slope: float
    slope_se: float

    @property
    def risks(self):
        return np.array([r.total for r in self.reports])


def rate_study(kernel, n_grid, k_rule, tau2, reps, seed=0,
               location_sampler=uniform_square, params=None):
    """Log-log slope of the Bayes L2-risk against ``n``.

    The true surface is drawn once from the kernel's prior span when the
    kernel supports it, otherwise from a GP on a fixed reference design.
    """
    n_grid = np.asarray(n_grid, dtype=int)
    if n_grid.size < 4 or np.any(np.diff(n_grid) <= 0):
        raise InputError("n_grid must be increasing with at least 4 points")
    kernel = _kernel(kernel, params)
    gen = rngs.make_rng(seed, rngs.RISK, 1)
    if hasattr(kernel, "draw_function"):
        w0 = kernel.draw_function(gen)
    else:
        w0 = _reference_draw(kernel, gen, location_sampler)
    k_grid = np.array([int(k_rule(int(n))) for n in n_grid])
    reports = tuple(
        risk_decomposition(int(n), int(k), kernel, tau2, w0, location_sampler, reps,
                           seed)
        for n, k in zip(n_grid, k_grid)
    )
    x = np.log(n_grid.astype(float))
    yv = np.log([r.total for r in reports])
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, yv, rcond=None)
    resid = yv - A @ coef
    s2 = resid @ resid / (x.size - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    return RateStudy(n_grid, k_grid, reports, float(coef[1]), float(np.sqrt(cov[1, 1])))


def _reference_draw(kernel, gen, location_sampler, size=400):
    """Kernel interpolant of a GP draw on a reference design."""
    R = location_sampler(gen, size)
    K = kernel(R, R)
    L, _ = chol_psd(K, float(np.mean(np.diag(K))))
    coef = chol_solve(L, L @ gen.standard_normal(size))
    return lambda S: kernel(S, R) @ coef


def phi_loglik_derivatives(data, phi, sigma2, tau2, exponent=1.0, beta=None,
                           spec=KernelSpec("exponential")):
    """First and second ``phi``-derivatives of the tempered log-likelihood.

    For the exponential kernel ``R = sigma2 exp(-phi D) + tau2 I`` has
    ``R' = -D sigma2 exp(-phi D)`` and ``R'' = D**2 sigma2 exp(-phi D)``, so

    ``d1 = a/2 [-tr(R^-1 R') + r^T R^-1 R' R^-1 r]``
    ``d2 = a/2 [tr(R^-1 R' R^-1 R') - tr(R^-1 R'')
    + r^T (R^-1 R'' R^-1 - 2 R^-1 R' R^-1 R' R^-1) r]``

    with ``r = y - X beta`` (``beta = 0`` by default) and ``a`` the exponent.
    """
    if spec.family != "exponential" and not (spec.family == "matern"
                                             and np.isclose(spec.nu, 0.5)):
        raise InputError("closed-form derivatives need the exponential kernel")
    if not (phi > 0 and sigma2 > 0 and tau2 > 0):
        raise InputError("phi, sigma2 and tau2 must be positive")
    D = cdist(data.locations, data.locations)
    E = sigma2 * np.exp(-phi * D)
    R = E.copy()
    R[np.diag_indices_from(R)] += tau2
    R1 = -D * E
    R2 = D * D * E
    L, _ = chol_psd(R, sigma2 + tau2)
    beta = np.zeros(data.p) if beta is None else np.asarray(beta, dtype=float)
    alpha = chol_solve(L, data.y - data.X @ beta)
    A1 = chol_solve(L, R1)
    A2 = chol_solve(L, R2)
    g = R1 @ alpha
    d1 = -np.trace(A1) + alpha @ g
    d2 = (np.sum(A1 * A1.T) - np.trace(A2) + alpha @ R2 @ alpha
          - 2.0 * g @ chol_solve(L, g))
    return float(0.5 * exponent * d1), float(0.5 * exponent * d2)


RISK_COLUMNS = ("n", "k", "bias2", "var_mean", "var_disk", "total", "se")


def write_risk_report(path, rows):
    """Write ``(n, k, RiskReport)`` triples as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RISK_COLUMNS)
        for n, k, rep in rows:
            w.writerow([int(n), int(k)] + [repr(float(v)) for v in (
                rep.bias2, rep.var_mean, rep.var_disk, rep.total, rep.mc_standard_error)])
