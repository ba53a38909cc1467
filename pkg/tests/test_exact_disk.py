import numpy as np
import pytest
from scipy.linalg import block_diag

from disk.errors import InputError
from disk.exact_disk import (DegenerateKernel, disk_gauss_posterior, gamma_eff_dim,
                             nystrom_eigenvalues, phi_loglik_derivatives, rate_study,
                             risk_decomposition, write_risk_report)
from disk.kernels import CovParams, KernelSpec, StationaryKernel
from disk.model import ModelConfig, PriorSpec, SpatialDataset, marginal_loglik

EXP = KernelSpec("exponential")
PARAMS = CovParams(1.0, 0.1, 3.0)
KER = StationaryKernel(EXP, PARAMS)


def smooth(S):
    return np.sin(3 * S[:, 0]) * np.cos(2 * S[:, 1])


def test_scalar_posterior():
    sigma2, tau2, y = 2.0, 0.5, 1.3
    res = disk_gauss_posterior([([[0.2, 0.3]], [y])], [0.2, 0.3], tau2, EXP,
                               CovParams(sigma2, tau2, 1.0))
    assert res.m_bar[0] == pytest.approx(sigma2 * y / (sigma2 + tau2), rel=1e-14)
    assert res.v_bar[0] == pytest.approx(sigma2 * tau2 / (sigma2 + tau2), rel=1e-14)


def subsets_for(rng, k, m):
    return [(rng.uniform(size=(m, 2)), rng.standard_normal(m)) for _ in range(k)]


def test_zero_response(rng):
    subs = subsets_for(rng, 3, 4)
    s = rng.uniform(size=(5, 2))
    a = disk_gauss_posterior(subs, s, 0.2, KER)
    b = disk_gauss_posterior([(S, 0 * y) for S, y in subs], s, 0.2, KER)
    assert np.all(b.m_bar == 0)
    np.testing.assert_array_equal(a.v_bar, b.v_bar)


def test_block_matrix_oracle(rng):
    k, tau2 = 2, 0.3
    subs = subsets_for(rng, k, 3)
    s = rng.uniform(size=(1, 2))
    res = disk_gauss_posterior(subs, s, tau2, KER)
    S = np.vstack([x for x, _ in subs])
    y = np.concatenate([v for _, v in subs])
    blocks = block_diag(*[KER(x, x) + tau2 / k * np.eye(3) for x, _ in subs])
    c = KER(S, s)[:, 0]
    m_bar = c @ np.linalg.inv(blocks) @ y / k
    v = [KER(s, s)[0, 0] - KER(x, s)[:, 0] @ np.linalg.inv(KER(x, x) + tau2 / k * np.eye(3))
         @ KER(x, s)[:, 0] for x, _ in subs]
    assert res.m_bar[0] == pytest.approx(m_bar, abs=1e-10)
    assert res.v_bar[0] == pytest.approx(np.mean(np.sqrt(v)) ** 2, abs=1e-10)


def test_sqrt_average_and_order(rng):
    subs = subsets_for(rng, 4, 6)
    s = rng.uniform(size=(7, 2))
    res = disk_gauss_posterior(subs, s, 0.1, KER)
    np.testing.assert_allclose(np.sqrt(res.v_bar), np.sqrt(res.per_subset_v).mean(0),
                               rtol=1e-14, atol=0)
    rev = disk_gauss_posterior(subs[::-1], s, 0.1, KER)
    np.testing.assert_allclose(rev.m_bar, res.m_bar, rtol=1e-13)
    np.testing.assert_allclose(rev.v_bar, res.v_bar, rtol=1e-13)
    assert np.all(res.v_bar >= 0)


def test_mean_is_linear(rng):
    subs = subsets_for(rng, 3, 5)
    s = rng.uniform(size=(4, 2))
    y2 = [rng.standard_normal(5) for _ in range(3)]
    a, b = 1.7, -0.4
    m1 = disk_gauss_posterior(subs, s, 0.2, KER).m_bar
    m2 = disk_gauss_posterior([(S, y) for (S, _), y in zip(subs, y2)], s, 0.2, KER).m_bar
    mix = disk_gauss_posterior([(S, a * y + b * z) for (S, y), z in zip(subs, y2)], s, 0.2,
                               KER).m_bar
    np.testing.assert_allclose(mix, a * m1 + b * m2, atol=1e-12)


def test_posterior_input_errors(rng):
    with pytest.raises(InputError):
        disk_gauss_posterior([], [0, 0], 0.1, KER)
    with pytest.raises(InputError):
        disk_gauss_posterior(subsets_for(rng, 1, 3), [0, 0], 0.0, KER)
    with pytest.raises(InputError):
        disk_gauss_posterior([(np.zeros((2, 2)), [1.0])], [0, 0], 0.1, KER)


def test_zero_truth_is_unbiased():
    rep = risk_decomposition(30, 3, KER, 0.1, lambda S: np.zeros(len(S)), mc_reps=300, seed=2)
    assert rep.bias2 < 3 * rep.se_bias2 + 1e-300


def test_total_matches_components():
    rep = risk_decomposition(40, 2, KER, 0.1, smooth, mc_reps=500, seed=4)
    assert abs(rep.total - rep.components) <= 3 * rep.combined_se
    assert min(rep.bias2, rep.var_mean, rep.var_disk) >= -rep.mc_standard_error


def test_var_mean_over_tau2_decreases():
    ratios = [risk_decomposition(30, 2, KER, t, smooth, mc_reps=100, seed=1).var_mean / t
              for t in (0.1, 0.2, 0.4)]
    assert ratios[0] > ratios[1] > ratios[2]


def test_risk_input_errors():
    with pytest.raises(InputError):
        risk_decomposition(10, 2, KER, 0.1, smooth, mc_reps=1)
    with pytest.raises(InputError):
        risk_decomposition(10, 11, KER, 0.1, smooth)


def test_gamma_examples():
    assert gamma_eff_dim([1, 1], 1) == 1.0
    assert gamma_eff_dim([2], 2) == 0.5
    with pytest.raises(InputError):
        gamma_eff_dim([1, -1e-6], 1)
    with pytest.raises(InputError):
        gamma_eff_dim([1, 2], 1)
    with pytest.raises(InputError):
        gamma_eff_dim([1], 0)


def test_gamma_monotone_and_bounded(rng):
    mu = np.sort(rng.exponential(size=20))[::-1]
    mu[15:] = 0
    values = [gamma_eff_dim(mu, a) for a in np.logspace(-4, 2, 30)]
    assert np.all(np.diff(values) < 0)
    assert max(values) <= 15


def test_nystrom_consistency():
    g500 = gamma_eff_dim(nystrom_eigenvalues(KER, 500, seed=1), 0.01)
    g1000 = gamma_eff_dim(nystrom_eigenvalues(KER, 1000, seed=2), 0.01)
    assert abs(g500 - g1000) <= 0.05 * g1000


def test_degenerate_kernel_spectrum():
    ker = DegenerateKernel()
    assert ker.rank == 5
    mu = nystrom_eigenvalues(ker, 2000, seed=0)
    np.testing.assert_allclose(mu[:5], ker.mu, rtol=0.15)
    assert np.all(mu[5:] < 1e-10)
    S = np.random.default_rng(0).uniform(size=(7, 2))
    np.testing.assert_allclose(ker.diag(S), np.diag(ker(S, S)), rtol=1e-13)
    with pytest.raises(InputError):
        DegenerateKernel([0.5, 1.0])


def fd_instance(seed, m=15):
    gen = np.random.default_rng(seed)
    S = gen.uniform(0, 1, size=(m, 2))
    data = SpatialDataset(S, np.ones(m), gen.standard_normal(m))
    return data, float(gen.uniform(1, 8)), float(gen.uniform(0.5, 2)), \
        float(gen.uniform(0.05, 0.5)), float(gen.uniform(1, 10))


def loglik_in_phi(data, sigma2, tau2, a):
    cfg = ModelConfig(PriorSpec.default(1, phi_hi=1e3), EXP)
    return lambda phi: marginal_loglik(data, [0.0], CovParams(sigma2, tau2, phi), cfg, a)


@pytest.mark.parametrize("seed", range(5))
def test_derivatives_match_finite_differences(seed):
    data, phi, sigma2, tau2, a = fd_instance(seed)
    d1, d2 = phi_loglik_derivatives(data, phi, sigma2, tau2, a)
    f = loglik_in_phi(data, sigma2, tau2, a)
    h1, h2 = 1e-5 * phi, 1e-3 * phi
    fd1 = (f(phi + h1) - f(phi - h1)) / (2 * h1)
    fd2 = (-f(phi + 2 * h2) + 16 * f(phi + h2) - 30 * f(phi) + 16 * f(phi - h2)
           - f(phi - 2 * h2)) / (12 * h2**2)
    assert d1 == pytest.approx(fd1, rel=1e-6)
    assert d2 == pytest.approx(fd2, rel=1e-4)


def test_derivatives_need_exponential():
    data, phi, sigma2, tau2, a = fd_instance(0)
    with pytest.raises(InputError):
        phi_loglik_derivatives(data, phi, sigma2, tau2, a, spec=KernelSpec("squared_exponential"))


def test_rate_study_needs_grid():
    with pytest.raises(InputError):
        rate_study(DegenerateKernel(), [10, 20, 40], lambda n: 1, 0.1, 5)


def test_risk_report_csv(tmp_path):
    rep = risk_decomposition(20, 2, KER, 0.1, smooth, mc_reps=10, seed=0)
    path = tmp_path / "risk.csv"
    write_risk_report(path, [(20, 2, rep)])
    lines = path.read_text().splitlines()
    assert lines[0] == "n,k,bias2,var_mean,var_disk,total,se"
    assert lines[1].startswith("20,2,") and float(lines[1].split(",")[5]) == rep.total


@pytest.mark.slow
def test_degenerate_rates():
    grid = [128, 256, 512, 1024, 2048]
    disk = rate_study(DegenerateKernel(), grid, lambda n: n // 64, 0.1, 100, seed=3)
    assert -1.3 <= disk.slope <= -0.7
    assert np.sum(np.diff(disk.risks) > 0) <= 1
    base = rate_study(DegenerateKernel(), grid, lambda n: 1, 0.1, 50, seed=3)
    assert -1.3 <= base.slope <= -0.7
