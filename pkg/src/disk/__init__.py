"""Distributed kriging (DISK).

Partition spatial data, sample stochastic-approximated subset posteriors of a
GP or modified-predictive-process regression model, and combine them through
one-dimensional Wasserstein barycenters (quantile averaging).
"""

from disk.errors import ChainAbort, DiskError, InputError, NumericalError
from disk.kernels import CovParams, KernelSpec

__version__ = "0.1.0"

__all__ = [
    "ChainAbort",
    "CovParams",
    "DiskError",
    "InputError",
    "KernelSpec",
    "NumericalError",
]
