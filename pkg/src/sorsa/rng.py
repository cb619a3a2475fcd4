"""Named, counter-based random streams.

All randomness in the package flows through `stream(seed, name)`: a Philox
(4x64, 10 rounds) counter-based generator keyed by the 64-bit experiment
seed and an FNV-1a hash of the stream name.  Distinct names give
statistically independent streams, and the same (seed, name) pair always
replays the identical sequence, which is what makes traces byte-reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the named Philox stream for a 64-bit seed."""
    key = np.array([seed & _MASK64, _fnv1a64(name)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
