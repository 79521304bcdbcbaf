"""Deterministic RNG streams derived from a run seed and a purpose path."""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["child_rng", "derive_seed", "stream_key"]


def stream_key(*parts) -> list[int]:
    """Stable integer key from ints and strings (strings via CRC32)."""
    key = []
    for p in parts:
        if isinstance(p, str):
            key.append(zlib.crc32(p.encode("utf-8")))
        elif isinstance(p, (int, np.integer)):
            key.append(int(p) & 0xFFFFFFFF)
        else:
            raise TypeError(f"stream parts must be int or str, got {type(p).__name__}")
    return key


def child_rng(seed: int, *parts) -> np.random.Generator:
    """Generator for one named stream; same (seed, parts) -> same stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(stream_key(seed, *parts))))


def derive_seed(seed: int, *parts) -> int:
    """Stable integer sub-seed for APIs that take a plain seed."""
    return int(np.random.SeedSequence(stream_key(seed, *parts)).generate_state(1)[0])
