"""Deterministic random streams.

Every stochastic component draws from a Philox (counter-based) generator
keyed by a root seed plus an integer stream path, so independent substreams
are reproducible regardless of execution order or batching.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, *path: int) -> int:
    """Derive a 128-bit Philox key from a root seed and a stream path."""
    h = hashlib.sha256()
    h.update(int(seed).to_bytes(8, "little", signed=True))
    for p in path:
        h.update(int(p).to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest()[:16], "little")


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream identified by (seed, *path)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *path)))
