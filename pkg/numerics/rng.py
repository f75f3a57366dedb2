"""
Seeded random streams with named, order-independent sub-streams.

Every stream is a PCG64 generator keyed by (seed, path); ``child(name)``
derives a sub-stream from the path alone, so the draws one task sees do not
depend on which other tasks ran first.
"""
import zlib

import numpy as np

from core.exceptions import DomainError


def _spawn_key(part):
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode('utf-8'))


class Rng:
    """Single-owner random stream; never share one across tasks."""

    def __init__(self, seed, path=()):
        if int(seed) < 0 or int(seed) >= 2 ** 64:
            raise DomainError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        sequence = np.random.SeedSequence(
            entropy=self.seed, spawn_key=tuple(_spawn_key(part) for part in self.path)
        )
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path!r})"

    def child(self, name):
        """Independent sub-stream identified by ``name``."""
        return Rng(self.seed, self.path + (name,))

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)

    def permutation(self, x):
        return self.generator.permutation(x)

    def choice(self, a, size=None, replace=True, p=None):
        return self.generator.choice(a, size=size, replace=replace, p=p)
