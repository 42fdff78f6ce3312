"""Seeded randomness with reproducible named substreams.

Every run takes one root seed. Components derive their own streams with
``child("name", index, ...)``; string keys are hashed with SHA-256 so the
derivation is stable across platforms and interpreter runs.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("integer child keys must be non-negative")
        # offset so child(1) and child("1") cannot collide
        return (int(key) << 1) | 1
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little") << 1
    raise TypeError("child keys must be str or int, got %r" % type(key).__name__)


class RandomSource:
    """A PCG64 stream tied to (seed, derivation path)."""

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(path)
        seq = np.random.SeedSequence([self.seed] + list(self.path))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys) -> "RandomSource":
        """Derive an independent stream; drawing from self has no effect."""
        extended = self.path + tuple(_key_to_int(k) for k in keys)
        return RandomSource(self.seed, extended)

    def __repr__(self):
        return "RandomSource(seed=%d, path=%r)" % (self.seed, self.path)
