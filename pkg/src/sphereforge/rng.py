"""Seeded, counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, stream, *counters)``.  Stream names map to fixed integers (CRC32
of the UTF-8 name) so the rule is stable across platforms and releases:

    stream(seed, "x", block) -> Philox(SeedSequence(seed, spawn_key=(crc32("x"), block)))

Two different keys never share counter space, so sampling can be split
into blocks that are generated in any order or on any thread.
"""
from __future__ import annotations

import zlib

import numpy as np


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *counters: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = (stream_key(name),) + tuple(int(c) for c in counters)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def uniform_sphere(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """``count`` independent uniform points on S^{d-1}, shape (count, d)."""
    g = rng.standard_normal((count, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian vector has probability zero; redraw defensively
    while np.any(norms == 0):
        bad = (norms[:, 0] == 0)
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g / norms
