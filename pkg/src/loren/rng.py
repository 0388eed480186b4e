"""Seed splitting: every random stream is derived from (root seed, integer keys)."""

import numpy as np


def _key(v) -> int:
    if isinstance(v, float):
        v = int(round(v * 1000))
    v = int(v)
    return 2 * v if v >= 0 else -2 * v - 1


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for a (seed, keys...) path.

    Floats are keyed by ``round(1000 * v)`` so Eb/N0 points in dB work as keys.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
