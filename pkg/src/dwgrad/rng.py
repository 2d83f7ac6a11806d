"""Counter-based random streams.

Every stream is a Philox generator whose key comes from ``(seed, name)``
and whose counter starts at ``index << 192``. Shot ``k`` of a run therefore
sees the same numbers no matter how shots are batched or ordered.
"""
import zlib

import numpy as np


def _key(seed, name):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode()),))
    lo, hi = ss.generate_state(2, np.uint64)
    return int(lo) | (int(hi) << 64)


def stream(seed, name, index=0):
    """Generator for substream ``index`` of the named stream."""
    bitgen = np.random.Philox(key=_key(seed, name), counter=int(index) << 192)
    return np.random.Generator(bitgen)


def derive_seed(seed, name, index=0):
    """Integer seed for a child component (e.g. one sweep point)."""
    return int(stream(seed, name, index).integers(0, 2**63 - 1))
