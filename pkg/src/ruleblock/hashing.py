"""Deterministic hashing helpers.

Python's builtin ``hash`` is salted per process, so everything that must
be stable across runs and across worker processes (bucket assignment,
minhash signatures, circle positions) goes through blake2b here.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stable_hash64(text: str, seed: int = 0) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "little", signed=False)).digest()
    return int.from_bytes(digest, "little")


def unit_position(text: str, seed: int = 0) -> float:
    """Map text to a point on the unit circle [0, 1)."""
    return stable_hash64(text, seed) / 2.0**64


def mix64(values: np.ndarray, seed: int) -> np.ndarray:
    """Vectorized splitmix64-style mixer over uint64 values."""
    x = values.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        x += np.uint64((seed * 0x9E3779B97F4A7C15) & _MASK64)
        x ^= x >> np.uint64(30)
        x *= np.uint64(0xBF58476D1CE4E5B9)
        x ^= x >> np.uint64(27)
        x *= np.uint64(0x94D049BB133111EB)
        x ^= x >> np.uint64(31)
    return x


def minhash_value(item_ids: np.ndarray, seed: int) -> int:
    """Min of the mixed ids; a fixed sentinel for empty sets."""
    if len(item_ids) == 0:
        return stable_hash64("\x00empty", seed)
    return int(mix64(item_ids.astype(np.uint64), seed).min())


def minhash_signature(item_ids: np.ndarray, seeds: range) -> tuple[int, ...]:
    return tuple(minhash_value(item_ids, s) for s in seeds)
