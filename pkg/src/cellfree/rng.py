"""Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by the master seed
plus a tuple of stream identifiers, so that a batch's draws depend only on
(seed, stream ids) and never on scheduling.
"""

import numpy as np

# stream tags keep unrelated consumers of one master seed apart
TOPOLOGY = 1
FADING = 2
PILOTS = 3
TRAINING = 4
EVALUATION = 5
SOLVER = 6


def make_rng(seed, *stream):
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    key = [int(seed)] + [int(s) for s in stream]
    if any(k < 0 for k in key):
        raise ValueError(f"seed and stream ids must be non-negative: {key}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def as_rng(seed_or_rng, *stream):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return make_rng(seed_or_rng, *stream)
