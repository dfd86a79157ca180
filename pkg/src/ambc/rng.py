"""Deterministic random-stream derivation.

Every stochastic routine in this package takes an explicit
``numpy.random.Generator``.  Independent sub-streams are derived from a
master seed plus a key path (strings and integers), so results never
depend on scheduling order or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "spawn", "derive_seed"]


def _key_int(key) -> int:
    """Map a stream key to a stable non-negative integer."""
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream key must be int or str, got {type(key).__name__}")


def substream(seed: int, *keys) -> np.random.Generator:
    """Derive an independent generator from ``seed`` and a key path.

    The same (seed, keys) pair always yields the same stream, regardless
    of how many other streams were derived before it.
    """
    entropy = [int(seed) & (2**64 - 1)] + [_key_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def spawn(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``n`` index-addressed children (one call only)."""
    return rng.spawn(n)


def derive_seed(seed: int, *keys) -> int:
    """Collapse (seed, keys) into a plain 63-bit integer seed."""
    entropy = [int(seed) & (2**64 - 1)] + [_key_int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(state) & (2**63 - 1)
