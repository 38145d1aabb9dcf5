"""Keyed, reproducible random streams.

Every random decision in a simulation draws from an ``RngStream``. Streams
form a tree: ``stream.derive("local", t, k)`` always yields the same child
stream for the same key path, no matter how much the parent has already been
consumed or in which order children are created. That property is what keeps
results independent of thread scheduling.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key: int | str) -> int:
    if isinstance(key, (bool, np.bool_)):
        raise TypeError("boolean stream keys are ambiguous")
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        # high bit keeps string keys disjoint from small integer keys
        return (1 << 32) | zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"unsupported stream key type {type(key).__name__}")


class RngStream:
    """A numpy ``Generator`` bound to a (seed, key path) identity."""

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def derive(self, *keys: int | str) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(_key_to_int(k) for k in keys))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    # thin pass-throughs for the draws this package needs
    def random(self, size=None):
        return self._gen.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def dirichlet(self, alpha, size=None):
        return self._gen.dirichlet(alpha, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
