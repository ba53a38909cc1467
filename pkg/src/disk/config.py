"""Flat ``key = value`` run configuration.

One setting per line; ``#`` starts a comment; blank lines are ignored.
Unknown keys are rejected so typos surface immediately.  Relative paths are
resolved against the config file's directory.
"""

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from disk.bench import SimConfig
from disk.combine import QuantileGrid
from disk.errors import InputError
from disk.kernels import KernelSpec
from disk.model import VARIANTS, PriorSpec
from disk.sampler import McmcConfig

PATH_KEYS = ("train", "test", "truth", "knots")


@dataclass
class RunConfig:
    # data
    scenario: str = "sim1"
    n_train: int = 2000
    n_test: int = 400
    tau2_0: float | None = None
    train: str | None = None
    test: str | None = None
    truth: str | None = None
    # partition
    k: int = 10
    overlap: float = 0.0
    partitioner: str = "random"
    # model
    kernel: str = "exponential"
    nu: float | None = None
    variant: str = "mpp"
    r: int = 100
    knots: str | None = None
    knots_shared: bool = True
    # prior
    mu_beta: float = 0.0
    sigma_beta: float = 100.0
    a_sigma: float = 2.0
    b_sigma: float = 2.0
    a_tau: float = 2.0
    b_tau: float = 0.1
    phi_lo: float = 0.01
    phi_hi: float = 3.0
    # mcmc
    n_iter: int = 3000
    burn_in: int = 1000
    thin: int = 2
    step_size: float = 0.1
    adapt: bool = True
    # combination and evaluation
    xi: float = 1e-3
    level: float = 0.95
    # run
    seed: int = 0
    workers: int = 1
    # risk study
    risk_n_grid: tuple = (128, 256, 512, 1024, 2048, 4096)
    risk_block: int = 64
    risk_tau2: float = 0.1
    risk_reps: int = 200
    risk_rank: int = 5
    source: Path | None = field(default=None, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.k < 1:
            raise InputError("k must be >= 1")
        if self.workers < 1:
            raise InputError("workers must be >= 1")
        if self.variant not in VARIANTS:
            raise InputError(f"variant must be one of {VARIANTS}")
        if self.variant == "mpp" and self.r < 1:
            raise InputError("r must be >= 1")
        if not 0.0 <= self.overlap < 1.0:
            raise InputError("overlap must lie in [0, 1)")
        if self.seed < 0:
            raise InputError("seed must be non-negative")
        # construct the typed configs once so bad values fail at load time
        self.sim_config(), self.kernel_spec(), self.prior(1), self.mcmc(0), self.grid()
        for key in PATH_KEYS:
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise InputError(f"config {key} refers to missing file {value}")

    def sim_config(self):
        return SimConfig(self.scenario, self.n_train, self.n_test, tau2_0=self.tau2_0,
                         seed=self.seed)

    def kernel_spec(self):
        return KernelSpec(self.kernel, self.nu)

    def prior(self, p):
        return PriorSpec(np.full(p, self.mu_beta), self.sigma_beta * np.eye(p),
                         self.a_sigma, self.b_sigma, self.a_tau, self.b_tau,
                         self.phi_lo, self.phi_hi)

    def mcmc(self, seed):
        if self.burn_in >= self.n_iter:
            raise InputError("burn_in must be smaller than n_iter")
        return McmcConfig(self.n_iter, self.burn_in, self.thin, (self.step_size,) * 3,
                          self.adapt, seed)

    def grid(self):
        return QuantileGrid(self.xi)


def _key(name):
    return name.replace(".", "_")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "source"}


def _convert(name, raw):
    default = _FIELDS[name].default
    if raw.lower() in ("", "none") and name in ("tau2_0", "nu", *PATH_KEYS):
        return None
    try:
        if name == "risk_n_grid":
            return tuple(int(v) for v in raw.split(","))
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or name in ("tau2_0", "nu"):
            return float(raw)
        return raw
    except ValueError:
        raise InputError(f"config key {name}: cannot parse {raw!r}") from None


def parse_config(text, base=None, **overrides):
    """Parse config text; ``overrides`` win over file values."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise InputError(f"config line {lineno}: expected key = value")
        name = _key(key.strip())
        if name not in _FIELDS:
            raise InputError(f"config line {lineno}: unknown key {key.strip()!r}")
        values[name] = _convert(name, raw.strip())
    for name in PATH_KEYS:
        if values.get(name) is not None and base is not None:
            values[name] = str(Path(base) / values[name])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def load_config(path=None, **overrides):
    if path is None:
        return parse_config("", **overrides)
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file {path} does not exist")
    cfg = parse_config(path.read_text(encoding="utf-8"), base=path.parent, **overrides)
    cfg.source = path
    return cfg


def format_config(cfg):
    """Config text that parses back to ``cfg``."""
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif value is None:
            value = "none"
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
