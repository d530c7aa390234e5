"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from a tuple of integers (master seed, item index, stage, attempt).
Streams never share state, so items can be produced in any order or in
parallel and still yield identical bytes.
"""
from __future__ import annotations

import numpy as np

# stage tags, kept stable so corpora stay reproducible across versions
ANNULUS = 1
ELASTIC = 2
PIECEWISE_AFFINE = 3
SPECIAL = 4
RETRY = 5


def derive_seed(*words: int) -> int:
    """Hash a tuple of non-negative integers into a 64-bit seed."""
    state = np.random.SeedSequence([int(w) & 0xFFFFFFFFFFFFFFFF for w in words]).generate_state(1, np.uint64)
    return int(state[0])


def stream(*words: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(w) & 0xFFFFFFFFFFFFFFFF for w in words]).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
