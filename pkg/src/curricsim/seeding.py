"""Named random streams derived from one master seed.

Each stochastic component asks for its own generator by tag, so adding a
component never shifts the draws of another.
"""

from __future__ import annotations

import zlib

import numpy as np


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Generator for ``(seed, tag, *index)``; equal arguments give equal draws."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = (tag_key(tag),) + tuple(int(i) for i in index)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
