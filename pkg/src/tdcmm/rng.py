"""Seeded substreams.

Every random draw in the package goes through :func:`substream`, which keys a
counter-based Philox generator by ``(seed, *keys)``. Two calls with the same
key tuple produce the same stream no matter which thread or process runs them.
"""
import numpy as np


def substream(seed, *keys):
    entropy = [int(seed)] + [int(k) for k in keys]
    if any(e < 0 for e in entropy):
        raise ValueError("seed and substream keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def child_seed(seed, *keys):
    """Draw a fresh 63-bit integer seed from the ``(seed, *keys)`` stream."""
    return int(substream(seed, *keys).integers(0, 2**63 - 1))
