from pathlib import Path

import numpy as np
import pytest

from disk.bench import (EvalReport, SimConfig, evaluate, f0, gen_sim1, gen_sim2, generate,
                        read_truth, w0_sim1, write_truth)
from disk.chainio import read_chains, read_keyvalues
from disk.combine import DiskPosterior, QuantileGrid, QuantileSummary, combine_chains
from disk.errors import InputError
from disk.model import read_dataset

GOLDEN = Path(__file__).parent / "fixtures" / "golden"


def test_w0_symmetric(rng):
    S = rng.uniform(-2, 2, size=(50, 2))
    np.testing.assert_array_equal(w0_sim1(S), w0_sim1(S[:, ::-1]))


def test_f0_two_implementations():
    from mpmath import mp, mpf, exp, sin
    mp.dps = 40
    s = mpf("-0.1")
    ref = exp(-(s - 1) ** 2) + exp(-mpf("0.8") * (s + 1) ** 2) - mpf("0.05") * sin(8 * (s + mpf("0.1")))
    assert f0(-0.1) == pytest.approx(float(ref), abs=1e-14)


def test_sim1_shapes_and_determinism():
    cfg = SimConfig("sim1", 100, 20, seed=4)
    train, test, w0 = gen_sim1(cfg)
    assert train.n == 100 and test.n == 20 and w0.shape == (20,)
    assert np.all(train.X == 1) and train.p == 1
    assert np.all(np.abs(train.locations) <= 2)
    again = gen_sim1(cfg)
    np.testing.assert_array_equal(again[0].y, train.y)
    np.testing.assert_array_equal(again[2], w0)


def test_sim1_noise_variance():
    train, _, _ = gen_sim1(SimConfig("sim1", 10**6, 2, seed=1))
    eps = train.y - 1.0 - w0_sim1(train.locations)
    se = 0.01 * np.sqrt(2 / eps.size)
    assert abs(eps.var() - 0.01) <= 3 * se


def test_sim1_blocks_are_prefix_stable():
    small = gen_sim1(SimConfig("sim1", 70000, 10, seed=2))[0]
    large = gen_sim1(SimConfig("sim1", 140000, 10, seed=2))[0]
    np.testing.assert_array_equal(small.locations[:65536], large.locations[:65536])


def test_sim2_variance_and_correlation():
    vals = []
    for seed in range(8):
        _, _, w0 = gen_sim2(SimConfig("sim2", 1500, 100, seed=seed))
        vals.append(w0)
    w = np.concatenate(vals)
    # each field is strongly dependent within itself, so use between-field spread
    per_field = np.array([v.var() + v.mean() ** 2 for v in vals])
    assert abs(per_field.mean() - 1.0) <= 3 * per_field.std(ddof=1) / np.sqrt(len(vals))
    assert w.size == 8 * 1600


def test_sim2_correlation_at_half_distance():
    from disk.kernels import CovParams, KernelSpec, kernel_matrix
    d = np.log(2) / 9
    gen = np.random.default_rng(0)
    a = gen.uniform(0.2, 0.8, size=(4000, 2))
    b = a + d * np.column_stack([np.cos(t := gen.uniform(0, 2 * np.pi, 4000)), np.sin(t)])
    cfg = SimConfig("sim2", 10, 1)
    corr = []
    for rep in range(200):
        g = np.random.default_rng(rep)
        pts = np.vstack([a[rep * 20:(rep + 1) * 20], b[rep * 20:(rep + 1) * 20]])
        C = kernel_matrix(KernelSpec(), CovParams(cfg.sigma2_0, 0.1, cfg.phi_0), pts, pts)
        w = np.linalg.cholesky(C) @ g.standard_normal(40)
        corr.append(w[:20] * w[20:])
    corr = np.concatenate(corr)
    assert abs(corr.mean() - 0.5) <= 3 * corr.std() / np.sqrt(corr.size)


def test_sim2_guard_and_determinism():
    with pytest.raises(InputError):
        gen_sim2(SimConfig("sim2", 20000, 1))
    a = gen_sim2(SimConfig("sim2", 50, 5, seed=9))[2]
    np.testing.assert_array_equal(a, gen_sim2(SimConfig("sim2", 50, 5, seed=9))[2])
    assert generate(SimConfig("sim2", 50, 5, seed=9))[2].shape == (5,)


def test_simconfig_validation():
    with pytest.raises(InputError):
        SimConfig("sim3")
    with pytest.raises(InputError):
        SimConfig(n_train=0)
    assert SimConfig("sim2").tau2_0 == 0.1 and SimConfig("sim1").tau2_0 == 0.01


def point_posterior(values, width=0.0, xi=0.25):
    g = QuantileGrid(xi)
    summaries = {}
    for i, v in enumerate(values):
        q = v + width * (g.probs - 0.5)
        summaries[f"wstar_{i + 1}"] = QuantileSummary(g, q)
        summaries[f"ystar_{i + 1}"] = QuantileSummary(g, q)
    return DiskPosterior(g, summaries)


def test_exact_truth_zero_width():
    w0 = np.array([0.3, -1.0, 2.0])
    rep = evaluate(point_posterior(w0), w0, w0)
    assert rep.bias2 == 0 and rep.variance == 0
    assert rep.ci_coverage == 1.0 and rep.pi_coverage == 1.0 and rep.ci_length == 0


def test_constant_offset():
    w0 = np.array([0.3, -1.0, 2.0])
    rep = evaluate(point_posterior(w0 + 0.25), w0, w0)
    assert rep.bias2 == pytest.approx(0.0625, rel=1e-14)
    assert rep.l2_risk == rep.bias2 + rep.variance


def test_hand_computed_three_locations():
    # quantile functions q_i(p) = c_i + (p - 0.5) on the grid {0.25, 0.5, 0.75}
    w0 = np.array([0.0, 1.0, 2.0])
    y = np.array([0.1, 0.5, 2.0])
    post = point_posterior(np.array([0.0, 0.9, 2.3]), width=1.0)
    rep = evaluate(post, w0, y, level=0.5)
    assert rep.bias2 == pytest.approx((0 + 0.01 + 0.09) / 3, rel=1e-12)
    # trapezoid of (p - 0.5)^2 at 0.25, 0.5, 0.75 is 0.25 * 0.0625 = 1/64; over span 0.5
    assert rep.variance == pytest.approx(1 / 32, rel=1e-12)
    assert rep.mspe == pytest.approx((0.01 + 0.16 + 0.09) / 3, rel=1e-12)
    # 0.5-level intervals are [c - 0.25, c + 0.25]
    assert rep.ci_coverage == pytest.approx(2 / 3)
    assert rep.pi_coverage == pytest.approx(1 / 3)
    assert rep.ci_length == pytest.approx(0.5)


def test_evaluate_errors():
    post = point_posterior([0.0, 1.0])
    with pytest.raises(InputError):
        evaluate(post, [0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    with pytest.raises(InputError):
        evaluate(post, [0.0, 1.0], [0.0], level=0.9)
    with pytest.raises(InputError):
        evaluate(post, [0.0, 1.0], [0.0, 1.0], level=1.0)


def test_truth_roundtrip(tmp_path):
    path = tmp_path / "w0.csv"
    w = np.array([0.1, -0.2, 1 / 3])
    write_truth(path, w)
    assert path.read_text().startswith("row_index,w0\n")
    np.testing.assert_array_equal(read_truth(path), w)


def golden_inputs():
    chains = read_chains(GOLDEN / "chains")
    truth = read_truth(GOLDEN / "w0.csv")
    y = read_dataset(GOLDEN / "test.csv").y
    return chains, truth, y


def test_golden_report():
    chains, truth, y = golden_inputs()
    rep = evaluate(combine_chains(chains, QuantileGrid(0.01)), truth, y)
    golden = {k: float(v) for k, v in read_keyvalues(GOLDEN / "golden_eval.txt").items()}
    for key, value in rep.as_dict().items():
        assert value == pytest.approx(golden[key], abs=1e-10, rel=1e-10), key


def test_golden_against_independent_reference():
    chains, truth, y = golden_inputs()
    probs = np.arange(1, 100) / 100
    w = np.mean([np.quantile(c.wstar_draws, probs, axis=0) for c in chains], axis=0)
    ys = np.mean([np.quantile(c.ystar_draws, probs, axis=0) for c in chains], axis=0)
    interp = lambda q, p: np.array([np.interp(p, probs, q[:, i]) for i in range(q.shape[1])])
    med, lo, hi = interp(w, 0.5), interp(w, 0.025), interp(w, 0.975)
    span = probs[-1] - probs[0]
    mean = np.trapezoid(w, probs, axis=0) / span
    var = np.trapezoid(w**2, probs, axis=0) / span - mean**2
    rep = evaluate(combine_chains(chains, QuantileGrid(0.01)), truth, y)
    assert rep.bias2 == pytest.approx(np.mean((med - truth) ** 2), abs=1e-10)
    assert rep.variance == pytest.approx(np.mean(var), abs=1e-10)
    assert rep.mspe == pytest.approx(np.mean((interp(ys, 0.5) - y) ** 2), abs=1e-10)
    assert rep.ci_coverage == np.mean((lo <= truth) & (truth <= hi))
    assert rep.ci_length == pytest.approx(np.mean(hi - lo), abs=1e-10)


def test_report_fields():
    rep = EvalReport(1, 2, 3, 4, 0.5, 1, 0.5, 1)
    assert list(rep.as_dict()) == ["bias2", "variance", "l2_risk", "mspe", "ci_coverage",
                                   "ci_length", "pi_coverage", "pi_length"]
