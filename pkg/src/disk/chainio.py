"""On-disk layout of subset chains and small text artifacts.

One directory per subset holds ``params.csv`` (iter, beta_1..p, sigma2,
tau2, phi), ``wstar.csv`` (iter, w_1..l), ``ystar.csv`` (iter, y_1..l) and a
flat ``meta.txt``.  Floats are written with ``repr`` so a reread chain is
bit-identical to the one that was written.
"""

import csv
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from disk.errors import InputError
from disk.sampler import SubsetChain

META_KEYS = ("seed", "acceptance_rate", "jitter_events", "wall_time_s")


@contextmanager
def atomic_open(path):
    """Write to a temporary sibling and rename it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path, header, iters, block):
    with atomic_open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for it, row in zip(iters, block):
            w.writerow([int(it)] + [repr(float(v)) for v in row])


def read_table(path, prefix=None):
    path = Path(path)
    if not path.exists():
        raise InputError(f"missing artifact {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = [r for r in reader if r]
    if not header or header[0] != "iter":
        raise InputError(f"{path}: first column must be iter")
    if prefix is not None and any(not h.startswith(prefix) for h in header[1:]):
        raise InputError(f"{path}: columns must be {prefix}1..")
    try:
        block = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    return header, block[:, 0].astype(np.int64), block[:, 1:]


def write_keyvalues(path, items):
    with atomic_open(path) as fh:
        for key, value in items.items():
            fh.write(f"{key}={value}\n")


def read_keyvalues(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"missing artifact {path}")
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, sep, value = line.partition("=")
            if not sep:
                raise InputError(f"{path}: malformed line {line!r}")
            out[key.strip()] = value.strip()
    return out


def subset_dir(root, j):
    return Path(root) / f"subset_{j}"


def write_chain(directory, chain):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n_keep, p = chain.beta_draws.shape
    l = chain.wstar_draws.shape[1]
    iters = np.arange(1, n_keep + 1)
    write_table(directory / "params.csv",
                ["iter"] + [f"beta_{i + 1}" for i in range(p)] + ["sigma2", "tau2", "phi"],
                iters, np.hstack([chain.beta_draws, chain.alpha_draws]))
    write_table(directory / "wstar.csv", ["iter"] + [f"w_{i + 1}" for i in range(l)],
                iters, chain.wstar_draws)
    write_table(directory / "ystar.csv", ["iter"] + [f"y_{i + 1}" for i in range(l)],
                iters, chain.ystar_draws)
    write_keyvalues(directory / "meta.txt", {
        "seed": int(chain.seed),
        "acceptance_rate": repr(float(chain.acceptance_rate)),
        "jitter_events": int(chain.jitter_events),
        "wall_time_s": repr(round(float(chain.wall_time_s), 3)),
    })


def read_chain(directory):
    directory = Path(directory)
    header, it_p, params = read_table(directory / "params.csv")
    if header[-3:] != ["sigma2", "tau2", "phi"]:
        raise InputError(f"{directory / 'params.csv'}: last columns must be sigma2,tau2,phi")
    _, it_w, w = read_table(directory / "wstar.csv", prefix="w_")
    _, it_y, y = read_table(directory / "ystar.csv", prefix="y_")
    if not (np.array_equal(it_p, it_w) and np.array_equal(it_p, it_y)):
        raise InputError(f"{directory}: chain files disagree on iterations")
    if w.shape != y.shape:
        raise InputError(f"{directory}: wstar and ystar widths differ")
    meta = read_keyvalues(directory / "meta.txt")
    try:
        return SubsetChain(params[:, :-3], params[:, -3:], w, y,
                           float(meta["acceptance_rate"]), int(meta["jitter_events"]),
                           seed=int(meta["seed"]),
                           wall_time_s=float(meta.get("wall_time_s", "nan")))
    except KeyError as exc:
        raise InputError(f"{directory / 'meta.txt'}: missing key {exc}") from None


def read_chains(root):
    root = Path(root)
    dirs = sorted((d for d in root.glob("subset_*") if d.is_dir()),
                  key=lambda d: int(d.name.split("_")[1]))
    if not dirs:
        raise InputError(f"no subset chains under {root}")
    if [int(d.name.split("_")[1]) for d in dirs] != list(range(len(dirs))):
        raise InputError(f"{root}: subset directories must be numbered 0..k-1")
    return [read_chain(d) for d in dirs]
