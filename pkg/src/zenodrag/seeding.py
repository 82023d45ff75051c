"""Deterministic RNG substreams.

One root seed fans out into independent component streams through SeedSequence
spawn keys, so shot counts or evaluation order can change without perturbing
any other stream: substream(seed, 3, 17) is the same generator no matter what
else was drawn.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))
