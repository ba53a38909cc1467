"""Wasserstein-barycenter combination of subset posteriors.

For a scalar quantity the W2 barycenter of k distributions has the average
of their quantile functions as its quantile function, so every quantity is
summarized on a fixed probability grid ``xi, 2 xi, ..., 1 - xi`` and the
grids are averaged.  Empirical quantiles use the type-7 rule (linear
interpolation between order statistics).  Summaries only cover
``[xi, 1 - xi]``; pseudo-draws never leave that range.
"""

import csv
from dataclasses import dataclass

import numpy as np

from disk.errors import InputError


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    xi: float = 1e-4

    def __post_init__(self):
        if not 0 < self.xi < 0.5:
            raise InputError("xi must lie in (0, 0.5)")
        steps = 1.0 / self.xi
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise InputError("1 / xi must be an integer so the grid is symmetric")

    @property
    def size(self):
        return int(round(1.0 / self.xi)) - 1

    @property
    def probs(self):
        N = self.size + 1
        return np.arange(1, N) / N

    def __eq__(self, other):
        return isinstance(other, QuantileGrid) and self.size == other.size

    def __hash__(self):
        return hash(self.size)


@dataclass(frozen=True, eq=False)
class QuantileSummary:
    grid: QuantileGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise InputError(f"expected {self.grid.size} quantiles, got {values.shape}")
        if np.any(np.diff(values) < 0):
            raise InputError("quantile values must be non-decreasing")
        object.__setattr__(self, "values", values)

    def quantile(self, p):
        """Quantile function at ``p`` by linear interpolation on the grid."""
        return np.interp(p, self.grid.probs, self.values)

    def moments(self):
        """Mean and variance of the grid-truncated distribution.

        Trapezoidal quadrature of ``q(p)`` and ``q(p)**2`` over the grid,
        normalized by its span ``1 - 2 xi``.
        """
        p = self.grid.probs
        span = p[-1] - p[0]
        q = self.values
        mean = np.trapezoid(q, p) / span
        second = np.trapezoid(q * q, p) / span
        return float(mean), float(max(second - mean * mean, 0.0))


def empirical_quantiles(draws, grid):
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size < 2:
        raise InputError("need at least two draws")
    if not np.all(np.isfinite(draws)):
        raise InputError("draws must be finite")
    values = np.quantile(draws, grid.probs, method="linear")
    # interpolation can dip by an ulp between equal order statistics
    return QuantileSummary(grid, np.maximum.accumulate(values))


def average_quantiles(summaries):
    """Pointwise mean of quantile functions on a shared grid.

    Computed as ``q_1 + mean_j (q_j - q_1)`` so that averaging identical
    summaries returns the first one bit-for-bit.
    """
    summaries = list(summaries)
    if not summaries:
        raise InputError("nothing to average")
    grid = summaries[0].grid
    if any(s.grid != grid for s in summaries):
        raise InputError("summaries are on different grids")
    base = summaries[0].values
    if len(summaries) == 1:
        return QuantileSummary(grid, base.copy())
    offset = np.zeros_like(base)
    for s in summaries[1:]:
        offset += s.values - base
    values = base + offset / len(summaries)
    return QuantileSummary(grid, np.maximum.accumulate(values))


def sample_from_quantiles(summary, n_draws, rng):
    """Inverse-CDF draws from the piecewise-linear quantile function."""
    p = summary.grid.probs
    u = rng.uniform(p[0], p[-1], size=int(n_draws))
    return np.interp(u, p, summary.values)


def w2_squared(a, b):
    """Grid Riemann-sum approximation of the squared W2 distance."""
    if a.grid != b.grid:
        raise InputError("summaries are on different grids")
    return float(np.sum((a.values - b.values) ** 2) * a.grid.xi)


def quantity_labels(p, l):
    return ([f"beta_{i + 1}" for i in range(p)] + ["sigma2", "tau2", "phi"]
            + [f"wstar_{i + 1}" for i in range(l)]
            + [f"ystar_{i + 1}" for i in range(l)])


def chain_columns(chain):
    """Retained draws of one chain as ``(n_draws, n_quantities)``."""
    return np.hstack([chain.beta_draws, chain.alpha_draws,
                      chain.wstar_draws, chain.ystar_draws])


@dataclass(frozen=True, eq=False)
class DiskPosterior:
    grid: QuantileGrid
    summaries: dict

    def __getitem__(self, label):
        return self.summaries[label]

    def __contains__(self, label):
        return label in self.summaries

    @property
    def labels(self):
        return list(self.summaries)


def combine_chains(chains, grid):
    """DISK posterior of every scalar quantity from k subset chains."""
    chains = list(chains)
    if not chains:
        raise InputError("no chains to combine")
    p, l = chains[0].beta_draws.shape[1], chains[0].wstar_draws.shape[1]
    for j, c in enumerate(chains):
        if c.beta_draws.shape[1] != p or c.wstar_draws.shape[1] != l:
            raise InputError(f"chain {j} has a different quantity set")
    columns = [chain_columns(c) for c in chains]
    summaries = {}
    for q, label in enumerate(quantity_labels(p, l)):
        summaries[label] = average_quantiles(
            [empirical_quantiles(cols[:, q], grid) for cols in columns])
    return DiskPosterior(grid, summaries)


def write_disk_posterior(path, posterior):
    probs = posterior.grid.probs
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "prob", "value"])
        for label, summary in posterior.summaries.items():
            for p, v in zip(probs, summary.values):
                w.writerow([label, repr(float(p)), repr(float(v))])


def read_disk_posterior(path):
    by_label = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["quantity", "prob", "value"]:
            raise InputError(f"{path}: expected header quantity,prob,value")
        for label, p, v in reader:
            by_label.setdefault(label, []).append((float(p), float(v)))
    if not by_label:
        raise InputError(f"{path}: no quantities")
    first = np.array(next(iter(by_label.values())))
    grid = QuantileGrid(float(first[0, 0]))
    if grid.size != first.shape[0] or not np.allclose(first[:, 0], grid.probs):
        raise InputError(f"{path}: probabilities are not a regular xi grid")
    return DiskPosterior(grid, {
        label: QuantileSummary(grid, np.array(rows)[:, 1])
        for label, rows in by_label.items()
    })
