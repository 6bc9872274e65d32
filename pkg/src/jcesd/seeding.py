"""Deterministic sub-seed derivation.

Every random draw in the simulator is keyed by a tuple of integers
``(seed, *keys)`` so that per-user, per-TTI and per-stage streams are
independent of each other and of the order in which they are consumed.
"""

import zlib

import numpy as np


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def sub_seed(seed, *keys):
    """Return a 32-bit integer seed derived from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence([int(seed)] + [_key(k) for k in keys])
    return int(ss.generate_state(1)[0])


def rng(seed, *keys):
    return np.random.default_rng(sub_seed(seed, *keys)) if keys else np.random.default_rng(seed)
