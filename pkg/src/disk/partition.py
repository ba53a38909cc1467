"""Random allocation of observations to subsets."""

import csv
from dataclasses import dataclass

import numpy as np

from disk import rng as rngs
from disk.errors import InputError


@dataclass(frozen=True, eq=False)
class SubsetAssignment:
    memberships: tuple
    exponents: np.ndarray
    n: int

    @property
    def k(self):
        return len(self.memberships)

    @property
    def sizes(self):
        return np.array([m.size for m in self.memberships])


def _assignment(n, memberships):
    memberships = tuple(np.asarray(m, dtype=np.int64) for m in memberships)
    exponents = np.array([n / m.size for m in memberships])
    return SubsetAssignment(memberships, exponents, n)


def random_partition(n, k, seed, overlap_fraction=0.0):
    """Split rows ``0..n-1`` into ``k`` random subsets of near-equal size.

    A seeded Philox permutation is cut into ``k`` consecutive chunks whose
    sizes differ by at most one.  With ``overlap_fraction > 0`` each subset
    additionally receives ``floor(overlap_fraction * m_j)`` rows drawn
    without replacement from the other subsets.  Row indices are 0-based and
    sorted within each subset.
    """
    n, k = int(n), int(k)
    if not 1 <= k <= n:
        raise InputError(f"need 1 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise InputError("overlap_fraction must lie in [0, 1)")
    gen = rngs.make_rng(seed, rngs.PARTITION)
    perm = gen.permutation(n)
    chunks = [np.sort(c) for c in np.array_split(perm, k)]
    if overlap_fraction > 0 and k > 1:
        extended = []
        for chunk in chunks:
            extra = int(np.floor(overlap_fraction * chunk.size))
            others = np.setdiff1d(np.arange(n), chunk, assume_unique=True)
            picked = gen.choice(others, size=min(extra, others.size), replace=False)
            extended.append(np.sort(np.concatenate([chunk, picked])))
        chunks = extended
    return _assignment(n, chunks)


def write_assignment(path, assignment):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subset_id", "row_index"])
        for j, rows in enumerate(assignment.memberships):
            for i in rows:
                w.writerow([j, int(i)])


def read_assignment(path, n=None):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["subset_id", "row_index"]:
            raise InputError(f"{path}: expected header subset_id,row_index")
        pairs = np.array([[int(a), int(b)] for a, b in reader], dtype=np.int64)
    if pairs.size == 0:
        raise InputError(f"{path}: no rows")
    k = int(pairs[:, 0].max()) + 1
    memberships = [np.sort(pairs[pairs[:, 0] == j, 1]) for j in range(k)]
    covered = np.unique(pairs[:, 1])
    n_rows = covered.size if n is None else n
    if any(m.size == 0 for m in memberships):
        raise InputError(f"{path}: subset ids must be contiguous and non-empty")
    if covered.size != n_rows or covered[0] != 0 or covered[-1] != n_rows - 1:
        raise InputError(f"{path}: subsets do not cover rows 0..{n_rows - 1}")
    return _assignment(n_rows, memberships)


# Future partitioners (clustered, stratified) register here under a config
# name; each takes (n, k, seed, overlap_fraction) and returns an assignment.
PARTITIONERS = {"random": random_partition}
