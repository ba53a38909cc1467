"""Command line pipeline: generate, partition, fit, combine, evaluate, risk-study.

All artifacts live in the ``--out`` directory.  Machine-readable results go
to files, flat ``key=value`` summaries to standard output and progress to
standard error.  Exit codes: 0 ok, 2 input error, 3 numerical error,
4 chain abort.
"""

import argparse
import csv
import logging
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from disk import rng as rngs
from disk.bench import evaluate, generate, read_truth, write_truth
from disk.chainio import atomic_open, read_chains, subset_dir, write_chain, write_keyvalues
from disk.combine import combine_chains, read_disk_posterior, write_disk_posterior
from disk.config import load_config
from disk.errors import ChainAbort, DiskError, InputError
from disk.exact_disk import DEFAULT_MU, DegenerateKernel, rate_study, write_risk_report
from disk.model import ModelConfig, read_dataset, write_dataset
from disk.partition import PARTITIONERS, read_assignment, write_assignment
from disk.sampler import run_subset_chain

log = logging.getLogger("disk")


def subset_seed(master, j):
    """Chain seed for subset ``j``, a hash of ``(master, j)``."""
    ss = np.random.SeedSequence([int(master), rngs.CHAIN, int(j)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def worker_count(cfg):
    env = os.environ.get("DISK_THREADS")
    if env is None:
        return cfg.workers
    try:
        workers = int(env)
    except ValueError:
        raise InputError(f"DISK_THREADS must be an integer, got {env!r}") from None
    if workers < 1:
        raise InputError("DISK_THREADS must be >= 1")
    return workers


class Paths:
    def __init__(self, out, cfg):
        self.out = Path(out)
        self.train = Path(cfg.train) if cfg.train else self.out / "train.csv"
        self.test = Path(cfg.test) if cfg.test else self.out / "test.csv"
        self.truth = Path(cfg.truth) if cfg.truth else self.out / "w0.csv"
        self.partition = self.out / "partition.csv"
        self.knots = Path(cfg.knots) if cfg.knots else self.out / "knots.csv"
        self.chains = self.out / "chains"
        self.posterior = self.out / "disk_posterior.csv"
        self.report = self.out / "eval_report.txt"
        self.risk = self.out / "risk_report.csv"


def _require(path):
    if not Path(path).exists():
        raise InputError(f"missing artifact {path}")
    return path


def atomic_write(path, writer, *args):
    """Run ``writer(tmp, *args)`` and rename ``tmp`` over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        writer(tmp, *args)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def emit(items):
    for key, value in items.items():
        print(f"{key}={value}")


def cmd_generate(cfg, paths):
    train, test, w0 = generate(cfg.sim_config())
    atomic_write(paths.train, write_dataset, train)
    atomic_write(paths.test, write_dataset, test)
    atomic_write(paths.truth, write_truth, w0)
    emit({"scenario": cfg.scenario, "n_train": train.n, "n_test": test.n,
          "train": paths.train, "test": paths.test, "truth": paths.truth})


def make_partition(cfg, n):
    return PARTITIONERS[cfg.partitioner](n, cfg.k, cfg.seed, cfg.overlap)


def cmd_partition(cfg, paths):
    if cfg.partitioner not in PARTITIONERS:
        raise InputError(f"unknown partitioner {cfg.partitioner!r}")
    train = read_dataset(_require(paths.train))
    part = make_partition(cfg, train.n)
    atomic_write(paths.partition, write_assignment, part)
    emit({"k": part.k, "n": part.n, "min_size": int(part.sizes.min()),
          "max_size": int(part.sizes.max()), "partition": paths.partition})


def read_knots(path, dim):
    with open(_require(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if r]
    if header != [f"s{i + 1}" for i in range(dim)]:
        raise InputError(f"{path}: expected header s1..s{dim}")
    try:
        return np.array(rows, dtype=float).reshape(len(rows), dim)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_knots(path, knots):
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"s{i + 1}" for i in range(knots.shape[1])])
        for row in knots:
            w.writerow([repr(float(v)) for v in row])


def draw_knots(locations, r, seed, *stream):
    """``r`` knots uniform over the bounding box of ``locations``."""
    lo, hi = locations.min(axis=0), locations.max(axis=0)
    gen = rngs.make_rng(seed, rngs.KNOTS, *stream)
    return lo + (hi - lo) * gen.uniform(size=(r, locations.shape[1]))


def _fit_one(args):
    data, S_star, X_star, model, mcmc, exponent, j = args
    return run_subset_chain(data, S_star, X_star, model, mcmc, exponent, subset_id=j)


def cmd_fit(cfg, paths):
    train = read_dataset(_require(paths.train))
    test = read_dataset(_require(paths.test), dim=train.dim)
    if paths.partition.exists():
        part = read_assignment(paths.partition, n=train.n)
    else:
        part = make_partition(cfg, train.n)
        atomic_write(paths.partition, write_assignment, part)
    if cfg.variant == "mpp" and cfg.r >= part.sizes.min():
        raise InputError(f"MPP rank r={cfg.r} must be below the smallest subset "
                         f"size {int(part.sizes.min())}")
    prior = cfg.prior(train.p)
    if cfg.variant == "mpp":
        if cfg.knots:
            shared = read_knots(paths.knots, train.dim)
        elif cfg.knots_shared:
            shared = draw_knots(train.locations, cfg.r, cfg.seed)
            write_knots(paths.knots, shared)
    jobs = []
    for j, rows in enumerate(part.memberships):
        data = train.subset(rows)
        knots = None
        if cfg.variant == "mpp":
            if cfg.knots or cfg.knots_shared:
                knots = shared
            else:
                knots = draw_knots(data.locations, cfg.r, cfg.seed, j + 1)
                write_knots(subset_dir(paths.chains, j) / "knots.csv", knots)
        model = ModelConfig(prior, cfg.kernel_spec(), cfg.variant, knots)
        jobs.append((data, test.locations, test.X, model,
                     cfg.mcmc(subset_seed(cfg.seed, j)), float(part.exponents[j]), j))

    workers = min(worker_count(cfg), part.k)
    log.info("fitting %d subsets on %d worker(s)", part.k, workers)
    if workers == 1:
        results = map(_fit_one, jobs)
        chains = _collect(results, paths)
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            chains = _collect(pool.map(_fit_one, jobs), paths)
    emit({"k": len(chains), "workers": workers,
          "mean_acceptance": repr(float(np.mean([c.acceptance_rate for c in chains]))),
          "jitter_events": sum(c.jitter_events for c in chains),
          "chains": paths.chains})


def _collect(results, paths):
    chains = []
    for j, chain in enumerate(results):
        log.info("subset %d: acceptance %.3f, jitter events %d, %.1fs",
                 j, chain.acceptance_rate, chain.jitter_events, chain.wall_time_s)
        write_chain(subset_dir(paths.chains, j), chain)
        chains.append(chain)
    return chains


def cmd_combine(cfg, paths):
    chains = read_chains(_require(paths.chains))
    posterior = combine_chains(chains, cfg.grid())
    atomic_write(paths.posterior, write_disk_posterior, posterior)
    p = chains[0].beta_draws.shape[1]
    summary = {"k": len(chains), "quantities": len(posterior.labels)}
    for label in [f"beta_{i + 1}" for i in range(p)] + ["sigma2", "tau2", "phi"]:
        summary[f"{label}_median"] = repr(float(posterior[label].quantile(0.5)))
    summary["posterior"] = paths.posterior
    emit(summary)


def cmd_evaluate(cfg, paths):
    posterior = read_disk_posterior(_require(paths.posterior))
    truth = read_truth(_require(paths.truth))
    test = read_dataset(_require(paths.test))
    report = evaluate(posterior, truth, test.y, cfg.level)
    items = {k: repr(v) for k, v in report.as_dict().items()}
    write_keyvalues(paths.report, items)
    emit(items)


def cmd_risk_study(cfg, paths):
    if not 1 <= cfg.risk_rank <= len(DEFAULT_MU):
        raise InputError(f"risk_rank must lie in 1..{len(DEFAULT_MU)}")
    kernel = DegenerateKernel(DEFAULT_MU[:cfg.risk_rank])
    study = rate_study(kernel, cfg.risk_n_grid, lambda n: max(1, n // cfg.risk_block),
                       cfg.risk_tau2, cfg.risk_reps, cfg.seed)
    atomic_write(paths.risk, write_risk_report,
                 list(zip(study.n_grid, study.k_grid, study.reports)))
    emit({"slope": repr(study.slope), "slope_se": repr(study.slope_se),
          "risk_report": paths.risk})


COMMANDS = {
    "generate": cmd_generate,
    "partition": cmd_partition,
    "fit": cmd_fit,
    "combine": cmd_combine,
    "evaluate": cmd_evaluate,
    "risk-study": cmd_risk_study,
}


def _global_flags(parser):
    sup = argparse.SUPPRESS
    parser.add_argument("--config", default=sup, help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=sup, help="master seed (overrides config)")
    parser.add_argument("--out", default=sup, help="artifact directory (default: .)")
    parser.add_argument("-v", "--verbose", action="store_true", default=sup)


def build_parser():
    parser = argparse.ArgumentParser(prog="disk", description=__doc__.splitlines()[0])
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        _global_flags(sub.add_parser(name, help=fn.__name__.replace("cmd_", "")))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else
                        logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fit":
        log.setLevel(logging.INFO)
    try:
        seed = getattr(args, "seed", None)
        if seed is not None and seed < 0:
            raise InputError("--seed must be non-negative")
        cfg = load_config(getattr(args, "config", None), seed=seed)
        out = Path(getattr(args, "out", "."))
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, Paths(out, cfg))
    except ChainAbort as exc:
        print(f"error: chain abort in subset {exc.subset_id}: {exc}", file=sys.stderr)
        return exc.exit_code
    except DiskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
