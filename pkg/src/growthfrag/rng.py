"""Splittable, counter-based random streams.

Every stream is identified by a master seed plus a path of non-negative
integer keys.  The generator behind a stream is numpy's Philox (a counter
based bit generator) keyed through ``SeedSequence``, so the draws of a
stream depend only on ``(seed, path)`` and never on the order in which
sibling streams were created or consumed.
"""
from __future__ import annotations

import numpy as np


class RandomStream:
    """A reproducible random stream that can be split into independent children.

    >>> root = RandomStream(7)
    >>> a = root.split(3).generator.random()
    >>> b = RandomStream(7, (3,)).generator.random()
    >>> a == b
    True
    """

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        if any(k < 0 for k in path):
            raise ValueError(f"stream keys must be non-negative, got {path}")
        self.seed = int(seed)
        self.path = tuple(int(k) for k in path)
        self._gen: np.random.Generator | None = None

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def split(self, *keys: int) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(keys))

    def __getstate__(self):
        # generator state is not shipped; children rebuild from (seed, path)
        return (self.seed, self.path)

    def __setstate__(self, state):
        self.seed, self.path = state
        self._gen = None

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, path={self.path})"


def as_stream(rng) -> RandomStream:
    """Accept a RandomStream or an integer seed."""
    if isinstance(rng, RandomStream):
        return rng
    return RandomStream(int(rng))
