"""Counter-style RNG stream derivation.

Every random stream in the package is derived from a master seed plus a
purpose tag and integer indices, so parallel workers never share state and
results do not depend on scheduling order.
"""

from __future__ import annotations

import zlib

import numpy as np


def purpose_code(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def derive_rng(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, purpose, *index)``."""
    if seed < 0 or any(i < 0 for i in index):
        raise ValueError("seed and indices must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(purpose_code(purpose), *map(int, index)))
    return np.random.Generator(np.random.Philox(ss))
