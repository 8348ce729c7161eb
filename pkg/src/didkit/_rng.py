"""Counter-based RNG streams.

Philox keyed by (seed, stream id) gives independent, order-free streams: a
consumer can draw stream k without generating streams 0..k-1 first, so
per-draw bootstrap multipliers and per-purpose simulation draws never depend
on scheduling.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, stream_id: int) -> np.random.Generator:
    key = np.array([seed & (2**64 - 1), stream_id & (2**64 - 1)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
