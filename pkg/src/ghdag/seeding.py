"""Deterministic seed derivation.

``derive_seed`` folds a tuple of integers through SplitMix64:

    h = 0x9E3779B97F4A7C15
    for v in values:  h = splitmix64(h ^ (v mod 2^64))

so any implementation of SplitMix64 reproduces sweep seeds bit-for-bit.
Random streams are numpy PCG64 generators keyed by
``SeedSequence(seed, spawn_key=key)``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# spawn-key namespaces for the per-node streams
PARAM_STREAM = 1
DATA_STREAM = 2


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(*values: int) -> int:
    h = 0x9E3779B97F4A7C15
    for v in values:
        h = splitmix64(h ^ (int(v) & MASK64))
    return h


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
