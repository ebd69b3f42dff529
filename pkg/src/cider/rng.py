"""Seeded random streams.

Each consumer asks for a stream by ``(seed, tag)``; streams with different
tags are statistically independent, and the same pair always yields the same
sequence (PCG64 seeded through ``numpy.random.SeedSequence``).
"""

import zlib

import numpy as np


def stream(seed: int, tag: str) -> np.random.Generator:
    key = zlib.crc32(tag.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(key,))))
