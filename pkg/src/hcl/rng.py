"""Deterministic RNG substreams.

Every random decision in the toolkit flows from one root seed through
named substreams, so results never depend on iteration order, thread
count, or how many draws an unrelated component consumed.
"""

from __future__ import annotations

import zlib

import numpy as np

DEFAULT_SEED = 42


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def substream(seed: int, *path) -> np.random.Generator:
    """Generator for the substream identified by (seed, *path).

    Path components may be strings (hashed stably) or integers.  The same
    (seed, path) always yields the same stream, independent of any other
    stream that was created or consumed.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))
