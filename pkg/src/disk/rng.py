"""Seeded random streams.

Every stream is a Philox4x64 counter-based generator keyed through
``numpy.random.SeedSequence``.  Philox output is defined bit-for-bit by its
key and counter, so a ``(seed, *stream)`` tuple reproduces the same numbers
on any platform and independently of how work is spread over processes.
"""

import numpy as np

# stream tags, kept stable so artifacts reproduce across releases
PARTITION = 1
KNOTS = 2
CHAIN = 3
GENERATE = 4
RISK = 5


def make_rng(seed, *stream):
    """Return a Philox generator for the stream ``(seed, *stream)``."""
    seed = int(seed)
    if seed < 0:
        raise ValueError("seeds must be non-negative integers")
    words = [seed] + [int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def subset_rng(master_seed, subset_id):
    return make_rng(master_seed, CHAIN, subset_id)
