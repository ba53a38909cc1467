"""Synthetic benchmarks and evaluation metrics.

Simulation 1 uses a smooth but locally wiggly deterministic surface on
``[-2, 2]^2``; Simulation 2 draws the surface once from an exponential GP on
``[0, 1]^2``.  Both add an intercept and white noise.  Test locations are
drawn uniformly, like the training ones.
"""

import csv
from dataclasses import dataclass

import numpy as np

from disk import rng as rngs
from disk.errors import InputError
from disk.kernels import CovParams, KernelSpec, kernel_matrix
from disk.linalg import chol_psd
from disk.model import SpatialDataset

SCENARIOS = ("sim1", "sim2")
SIM1_DOMAIN = (-2.0, 2.0)
SIM2_DOMAIN = (0.0, 1.0)
SIM2_MAX_POINTS = 20000
BLOCK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    scenario: str = "sim1"
    n_train: int = 10000
    n_test: int = 2025
    beta0: float = 1.0
    tau2_0: float | None = None
    sigma2_0: float = 1.0
    phi_0: float = 9.0
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InputError(f"scenario must be one of {SCENARIOS}")
        if self.n_train < 1 or self.n_test < 1:
            raise InputError("n_train and n_test must be >= 1")
        if self.tau2_0 is None:
            object.__setattr__(self, "tau2_0", 0.01 if self.scenario == "sim1" else 0.1)
        if min(self.tau2_0, self.sigma2_0, self.phi_0) <= 0:
            raise InputError("variance and decay parameters must be positive")


def f0(s):
    s = np.asarray(s, dtype=float)
    return (np.exp(-(s - 1.0) ** 2) + np.exp(-0.8 * (s + 1.0) ** 2)
            - 0.05 * np.sin(8.0 * (s + 0.1)))


def w0_sim1(S):
    S = np.atleast_2d(S)
    return -f0(S[:, 0]) * f0(S[:, 1])


def _split(S, w0, cfg, gen_noise):
    n = cfg.n_train
    y = cfg.beta0 + w0 + gen_noise
    ones = np.ones((S.shape[0], 1))
    train = SpatialDataset(S[:n], ones[:n], y[:n])
    test = SpatialDataset(S[n:], ones[n:], y[n:])
    return train, test


def gen_sim1(cfg):
    """Simulation 1 data; returns ``(train, test, w0_test)``.

    Locations and noise are generated in blocks of 65536 rows, each with its
    own Philox stream, so very large ``n`` streams through fixed memory per
    block and the output does not depend on how blocks are scheduled.
    """
    total = cfg.n_train + cfg.n_test
    lo, hi = SIM1_DOMAIN
    S = np.empty((total, 2))
    eps = np.empty(total)
    for b, start in enumerate(range(0, total, BLOCK)):
        stop = min(start + BLOCK, total)
        gen = rngs.make_rng(cfg.seed, rngs.GENERATE, 1, b)
        S[start:stop] = gen.uniform(lo, hi, size=(stop - start, 2))
        eps[start:stop] = np.sqrt(cfg.tau2_0) * gen.standard_normal(stop - start)
    w0 = w0_sim1(S)
    train, test = _split(S, w0, cfg, eps)
    return train, test, w0[cfg.n_train:]


def gen_sim2(cfg):
    """Simulation 2 data; returns ``(train, test, w0_all)``."""
    total = cfg.n_train + cfg.n_test
    if total > SIM2_MAX_POINTS:
        raise InputError(f"Simulation 2 is limited to {SIM2_MAX_POINTS} locations")
    gen = rngs.make_rng(cfg.seed, rngs.GENERATE, 2)
    lo, hi = SIM2_DOMAIN
    S = gen.uniform(lo, hi, size=(total, 2))
    params = CovParams(cfg.sigma2_0, cfg.tau2_0, cfg.phi_0)
    C = kernel_matrix(KernelSpec("exponential"), params, S, S)
    L, _ = chol_psd(C, cfg.sigma2_0)
    w0 = L @ gen.standard_normal(total)
    eps = np.sqrt(cfg.tau2_0) * gen.standard_normal(total)
    train, test = _split(S, w0, cfg, eps)
    return train, test, w0


def generate(cfg):
    """``(train, test, w0_test)`` for either scenario."""
    if cfg.scenario == "sim1":
        return gen_sim1(cfg)
    train, test, w0 = gen_sim2(cfg)
    return train, test, w0[cfg.n_train:]


@dataclass(frozen=True)
class EvalReport:
    bias2: float
    variance: float
    l2_risk: float
    mspe: float
    ci_coverage: float
    ci_length: float
    pi_coverage: float
    pi_length: float

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _surface(disk, prefix, l):
    labels = [f"{prefix}_{i + 1}" for i in range(l)]
    missing = [lab for lab in labels if lab not in disk]
    if missing:
        raise InputError(f"posterior lacks {len(missing)} {prefix} quantities, "
                         f"e.g. {missing[0]}")
    return [disk[lab] for lab in labels]


def evaluate(disk, truth, y_test, level=0.95):
    """Pointwise accuracy and interval metrics at the test locations.

    Point estimates are posterior medians, variances come from the
    quantile-grid quadrature in :meth:`QuantileSummary.moments`, and
    intervals are the equal-tailed ``level`` quantile ranges.
    """
    if not 0 < level < 1:
        raise InputError("level must lie in (0, 1)")
    truth, y_test = np.ravel(truth), np.ravel(y_test)
    if truth.size != y_test.size:
        raise InputError("truth and y_test lengths differ")
    l = truth.size
    tails = [(1 - level) / 2, 0.5, (1 + level) / 2]
    w = np.array([s.quantile(tails) for s in _surface(disk, "wstar", l)])
    y = np.array([s.quantile(tails) for s in _surface(disk, "ystar", l)])
    var = np.array([s.moments()[1] for s in _surface(disk, "wstar", l)])
    bias2 = float(np.mean((w[:, 1] - truth) ** 2))
    variance = float(np.mean(var))
    return EvalReport(
        bias2=bias2,
        variance=variance,
        l2_risk=bias2 + variance,
        mspe=float(np.mean((y[:, 1] - y_test) ** 2)),
        ci_coverage=float(np.mean((w[:, 0] <= truth) & (truth <= w[:, 2]))),
        ci_length=float(np.mean(w[:, 2] - w[:, 0])),
        pi_coverage=float(np.mean((y[:, 0] <= y_test) & (y_test <= y[:, 2]))),
        pi_length=float(np.mean(y[:, 2] - y[:, 0])),
    )


def write_truth(path, w0):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_index", "w0"])
        for i, v in enumerate(np.ravel(w0)):
            w.writerow([i, repr(float(v))])


def read_truth(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["row_index", "w0"]:
            raise InputError(f"{path}: expected header row_index,w0")
        rows = sorted((int(i), float(v)) for i, v in reader)
    if [i for i, _ in rows] != list(range(len(rows))):
        raise InputError(f"{path}: row indices must be 0..l-1")
    return np.array([v for _, v in rows])
