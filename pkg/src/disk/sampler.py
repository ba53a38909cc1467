"""Metropolis-within-Gibbs sampler for one stochastic-approximated subset.

Each iteration draws ``beta | alpha`` exactly, ``alpha | beta`` by a joint
random-walk Metropolis step on the unconstrained scale
``(log sigma2, log tau2, logit((phi - lo) / (hi - lo)))``, and, at retained
iterations, the predictive surface ``w*`` and responses ``y*``.  The subset
likelihood is raised to ``exponent = n / m_j`` throughout.

``w*`` and ``y*`` never feed back into ``(beta, alpha)``, so drawing them
only at retained iterations yields exactly the same joint distribution of
the retained draws as drawing them every sweep.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, logit
from threadpoolctl import threadpool_limits

from disk import rng as rngs
from disk.errors import ChainAbort, InputError, NumericalError
from disk.kernels import CovParams, fitc_blocks, kernel_matrix
from disk.linalg import DenseCov, LowRankCov, chol_psd, chol_solve, tri_solve
from disk.model import CovBuilder, marginal_loglik

log = logging.getLogger(__name__)

ADAPT_BATCH = 50
ADAPT_RANGE = (0.2, 0.5)
ABORT_WINDOW = 100


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int = 15000
    burn_in: int = 10000
    thin: int = 5
    step_sizes: tuple = (0.1, 0.1, 0.1)
    adapt: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise InputError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise InputError("thin must be >= 1")
        if len(self.step_sizes) != 3 or min(self.step_sizes) <= 0:
            raise InputError("step_sizes must be three positive reals")

    @property
    def retained(self):
        return (self.n_iter - self.burn_in) // self.thin


@dataclass(eq=False)
class SubsetChain:
    beta_draws: np.ndarray
    alpha_draws: np.ndarray
    wstar_draws: np.ndarray
    ystar_draws: np.ndarray
    acceptance_rate: float
    jitter_events: int
    seed: int = 0
    wall_time_s: float = 0.0


# -- priors and transforms ---------------------------------------------------

def _ig_logpdf(x, a, b):
    return a * np.log(b) - gammaln(a) - (a + 1.0) * np.log(x) - b / x


def log_prior_alpha(alpha, prior):
    if not prior.in_support(alpha):
        return -np.inf
    return (_ig_logpdf(alpha.sigma2, prior.a_sigma, prior.b_sigma)
            + _ig_logpdf(alpha.tau2, prior.a_tau, prior.b_tau)
            - np.log(prior.phi_hi - prior.phi_lo))


def to_unconstrained(alpha, prior):
    u = (alpha.phi - prior.phi_lo) / (prior.phi_hi - prior.phi_lo)
    return np.array([np.log(alpha.sigma2), np.log(alpha.tau2), logit(u)])


def from_unconstrained(theta, prior):
    width = prior.phi_hi - prior.phi_lo
    phi = prior.phi_lo + width * expit(theta[2])
    return CovParams(float(np.exp(theta[0])), float(np.exp(theta[1])), float(phi))


def log_jacobian(alpha, prior):
    """log |d alpha / d theta| of the unconstrained parameterization."""
    width = prior.phi_hi - prior.phi_lo
    return (np.log(alpha.sigma2) + np.log(alpha.tau2)
            + np.log(alpha.phi - prior.phi_lo) + np.log(prior.phi_hi - alpha.phi)
            - np.log(width))


def initial_alpha(prior):
    return CovParams(prior.b_sigma / prior.a_sigma, prior.b_tau / prior.a_tau,
                     0.5 * (prior.phi_lo + prior.phi_hi))


# -- conditionals ------------------------------------------------------------

def beta_conditional_moments(data, alpha, config, exponent, cov=None):
    """Mean and covariance of ``beta | alpha`` under the tempered likelihood."""
    prior = config.prior
    if cov is None:
        cov = CovBuilder(config, data.locations).response_cov(alpha)
    RiX = cov.solve(data.X)
    precision = exponent * data.X.T @ RiX + prior.Sigma_beta_inv
    rhs = exponent * RiX.T @ data.y + prior.Sigma_beta_inv @ prior.mu_beta
    Lp = np.linalg.cholesky(precision)
    mean = chol_solve(Lp, rhs)
    return mean, Lp


def sample_beta_conditional(data, alpha, config, exponent, rng, cov=None):
    """One exact draw of ``beta`` from its Gaussian full conditional."""
    if exponent <= 0:
        raise InputError("exponent must be positive")
    mean, Lp = beta_conditional_moments(data, alpha, config, exponent, cov)
    z = rng.standard_normal(mean.size)
    return mean + tri_solve(Lp, z, trans=True)


def alpha_log_target(data, beta, alpha, config, exponent, cov=None):
    """Unnormalized log density of ``alpha | beta``; ``-inf`` off support."""
    lp = log_prior_alpha(alpha, config.prior)
    if not np.isfinite(lp):
        return -np.inf
    return marginal_loglik(data, beta, alpha, config, exponent, cov) + lp


@dataclass
class AlphaState:
    alpha: CovParams
    cov: object
    log_target: float


def mh_step_alpha(state, data, beta, config, step_sizes, exponent, rng, builder=None):
    """Joint random-walk Metropolis update of ``alpha``.

    Returns ``(state, accepted, failed)`` where ``failed`` flags a proposal
    whose covariance could not be factorized (treated as a rejection).
    """
    prior = config.prior
    if builder is None:
        builder = CovBuilder(config, data.locations)
    theta = to_unconstrained(state.alpha, prior)
    prop_theta = theta + np.asarray(step_sizes) * rng.standard_normal(3)
    log_u = np.log(rng.uniform())
    if np.max(np.abs(prop_theta[:2])) > 700:
        return state, False, False  # exp over/underflow
    prop = from_unconstrained(prop_theta, prior)
    if not prior.in_support(prop) or prop.phi in (prior.phi_lo, prior.phi_hi):
        return state, False, False
    try:
        cov = builder.response_cov(prop)
    except NumericalError:
        return state, False, True
    target = alpha_log_target(data, beta, prop, config, exponent, cov)
    log_ratio = (target + log_jacobian(prop, prior)
                 - state.log_target - log_jacobian(state.alpha, prior))
    if log_u < log_ratio:
        return AlphaState(prop, cov, target), True, False
    return state, False, False


def predictive_moments(data, S_star, beta, alpha, config, exponent):
    """Dense mean and covariance of ``w* | beta, alpha, y_j``.

    Uses the direct form ``C** - C*j (Cjj + tau2/exponent I)^-1 Cj*`` with
    FITC blocks in place of the parent covariances for the MPP variant.
    """
    resid = data.y - data.X @ np.asarray(beta, dtype=float)
    nugget = alpha.tau2 / exponent
    if config.variant == "full":
        Cjj = kernel_matrix(config.kernel, alpha, data.locations, data.locations)
        Csj = kernel_matrix(config.kernel, alpha, S_star, data.locations)
        Css = kernel_matrix(config.kernel, alpha, S_star, S_star)
    else:
        blocks = fitc_blocks(config.kernel, alpha, config.knots, data.locations, S_star)
        Cjj, Csj, Css = blocks.Ctilde_jj, blocks.Ctilde_jstar.T, blocks.Ctilde_starstar
    A = DenseCov(Cjj + nugget * np.eye(Cjj.shape[0]), alpha.sigma2)
    W = A.solve(Csj.T)
    return W.T @ resid, Css - Csj @ W


def _draw_wstar_full(builder, cov_t, resid, alpha, rng):
    Csj = builder._cov(alpha, builder.D_ps)
    W = cov_t.solve(Csj.T)
    V = builder._cov(alpha, builder.D_pp) - Csj @ W
    L, jitter = chol_psd(0.5 * (V + V.T), alpha.sigma2)
    return W.T @ resid + L @ rng.standard_normal(V.shape[0]), jitter


def _draw_wstar_mpp(builder, cov_t, resid, alpha, rng):
    # posterior of the whitened knot coordinates is N(G^-1 U^T D^-1 r, G^-1)
    Lg = cov_t.G_factor
    b = cov_t.U.T @ (resid / cov_t.d)
    u = tri_solve(Lg, tri_solve(Lg, b) + rng.standard_normal(b.size), trans=True)
    U_star, delta_star = builder.predict_basis(alpha, cov_t.knot_factor)
    w = U_star @ u + np.sqrt(delta_star) * rng.standard_normal(delta_star.size)
    return w, 0.0


def sample_wstar_conditional(data, S_star, beta, alpha, config, exponent, rng,
                             builder=None):
    """One exact draw of the latent surface at ``S_star``.

    The nugget in the training-block solve is tempered to
    ``tau2 / exponent``.  Full rank draws factor the dense direct-form
    covariance; MPP draws go through the r-dimensional knot posterior and
    cost O(m r^2 + l r).
    """
    if builder is None:
        builder = CovBuilder(config, data.locations, predict_at=S_star)
    resid = data.y - data.X @ np.asarray(beta, dtype=float)
    cov_t = builder.response_cov(alpha, nugget=alpha.tau2 / exponent)
    if config.variant == "full":
        w, _ = _draw_wstar_full(builder, cov_t, resid, alpha, rng)
    else:
        w, _ = _draw_wstar_mpp(builder, cov_t, resid, alpha, rng)
    return w


def sample_ystar_conditional(X_star, beta, wstar, alpha, rng):
    """``y* ~ N(X* beta + w*, tau2 I)`` with the untempered nugget."""
    mean = np.asarray(X_star) @ np.asarray(beta) + np.asarray(wstar)
    return mean + np.sqrt(alpha.tau2) * rng.standard_normal(mean.shape[0])


# -- chain driver -------------------------------------------------------------

def _gls_beta(data, cov):
    RiX = cov.solve(data.X)
    return np.linalg.solve(data.X.T @ RiX, RiX.T @ data.y)


def run_subset_chain(data, S_star, X_star, config, mcmc, exponent=1.0, subset_id=None):
    """Run one subset chain and return its retained draws.

    Parameters
    ----------
    data : SpatialDataset
        The subset's training data.
    S_star, X_star : arrays
        Prediction locations ``(l, d)`` and their design rows ``(l, p)``.
    config : ModelConfig
    mcmc : McmcConfig
        ``mcmc.seed`` alone determines the random stream.
    exponent : float
        Stochastic-approximation power ``n / m_j``.

    Raises
    ------
    ChainAbort
        When more than half of the first 100 iterations hit a covariance that
        cannot be factorized, or the initial state cannot be factorized.
    """
    if exponent <= 0:
        raise InputError("exponent must be positive")
    S_star = np.atleast_2d(np.asarray(S_star, dtype=float))
    X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
    if X_star.shape != (S_star.shape[0], data.p):
        raise InputError(f"X_star must be ({S_star.shape[0]}, {data.p}), got {X_star.shape}")
    if config.variant == "mpp" and config.rank >= data.n:
        raise InputError(f"MPP rank r={config.rank} must be below subset size {data.n}")

    started = time.perf_counter()
    gen = rngs.make_rng(mcmc.seed)
    prior = config.prior
    builder = CovBuilder(config, data.locations, predict_at=S_star)
    p, l = data.p, S_star.shape[0]
    n_keep = mcmc.retained
    betas = np.empty((n_keep, p))
    alphas = np.empty((n_keep, 3))
    wstars = np.empty((n_keep, l))
    ystars = np.empty((n_keep, l))

    with threadpool_limits(limits=1):
        alpha = initial_alpha(prior)
        try:
            cov = builder.response_cov(alpha)
        except NumericalError as exc:
            raise ChainAbort(f"initial covariance not factorizable: {exc}", subset_id) from exc
        beta = _gls_beta(data, cov)
        state = AlphaState(alpha, cov, alpha_log_target(data, beta, alpha, config, exponent, cov))
        steps = np.array(mcmc.step_sizes, dtype=float)
        jitter_events = int(cov.jitter > 0)
        failures = batch_acc = kept_acc = kept_tries = 0
        k = 0
        for it in range(mcmc.n_iter):
            beta = sample_beta_conditional(data, state.alpha, config, exponent, gen, state.cov)
            state.log_target = alpha_log_target(data, beta, state.alpha, config, exponent,
                                                state.cov)
            new_state, accepted, failed = mh_step_alpha(
                state, data, beta, config, steps, exponent, gen, builder)
            if accepted:
                jitter_events += int(new_state.cov.jitter > 0)
            state = new_state
            if it < ABORT_WINDOW:
                failures += failed
                if failures > ABORT_WINDOW // 2:
                    raise ChainAbort(
                        f"{failures} factorization failures in the first {it + 1} "
                        f"iterations (alpha={state.alpha}, steps={steps})", subset_id)
            if it < mcmc.burn_in:
                batch_acc += accepted
                if mcmc.adapt and (it + 1) % ADAPT_BATCH == 0:
                    rate = batch_acc / ADAPT_BATCH
                    if rate < ADAPT_RANGE[0]:
                        steps *= 0.7
                    elif rate > ADAPT_RANGE[1]:
                        steps *= 1.3
                    batch_acc = 0
                continue
            kept_tries += 1
            kept_acc += accepted
            if (it - mcmc.burn_in + 1) % mcmc.thin:
                continue
            alpha = state.alpha
            resid = data.y - data.X @ beta
            cov_t = builder.response_cov(alpha, nugget=alpha.tau2 / exponent)
            if config.variant == "full":
                w, jit = _draw_wstar_full(builder, cov_t, resid, alpha, gen)
            else:
                w, jit = _draw_wstar_mpp(builder, cov_t, resid, alpha, gen)
            jitter_events += int(jit > 0 or cov_t.jitter > 0)
            betas[k] = beta
            alphas[k] = alpha.as_array()
            wstars[k] = w
            ystars[k] = sample_ystar_conditional(X_star, beta, w, alpha, gen)
            k += 1

    rate = kept_acc / max(kept_tries, 1)
    wall = time.perf_counter() - started
    log.info("subset %s: acceptance %.3f, jitter events %d, %.1fs",
             subset_id, rate, jitter_events, wall)
    return SubsetChain(betas, alphas, wstars, ystars, rate, jitter_events,
                       seed=mcmc.seed, wall_time_s=wall)
