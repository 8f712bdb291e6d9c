"""Seeded random-stream derivation.

A single root seed fully determines every stochastic draw in a run. Each
consumer derives its own stream from (root seed, label, tick) so draw order
never couples unrelated components and replays are exact across processes
(the label hash is content-based, not id()/hash()-based).
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(root_seed: int, label: str, tick: int | None = None) -> np.random.Generator:
    entropy = [int(root_seed) & 0xFFFFFFFF, zlib.crc32(label.encode("utf-8"))]
    if tick is not None:
        entropy.append(int(tick) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(entropy))
