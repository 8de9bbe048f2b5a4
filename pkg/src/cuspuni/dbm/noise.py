"""Reproducible Brownian increments shared between coupled processes.

Increments are addressed by ``(segment, step, path)``, where ``path`` is the
sequence of halving choices. A refined increment is drawn from the Brownian
bridge of its parent, so every process that asks for the same address gets
the same value regardless of how often it halved elsewhere.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


class BrownianSource:
    def __init__(self, seed: int, size: int, zero: bool = False):
        self.seed = int(seed)
        self.size = int(size)
        self.zero = zero
        self._cached = lru_cache(maxsize=4096)(self._increment)

    def _normal(self, key):
        rng = np.random.default_rng([self.seed, *key])
        return rng.standard_normal(self.size)

    def _increment(self, segment: int, step: int, path: tuple, dt: float):
        if self.zero:
            return np.zeros(self.size)
        if not path:
            return np.sqrt(dt) * self._normal((segment, step))
        parent = self._cached(segment, step, path[:-1], 2 * dt)
        # Brownian bridge split of the parent interval
        xi = self._normal((segment, step, 2, *[int(p) for p in path[:-1]], 7))
        left = 0.5 * parent + 0.5 * np.sqrt(2 * dt) * xi
        return left if path[-1] == 0 else parent - left

    def increment(self, segment: int, step: int, path: tuple, dt: float) -> np.ndarray:
        """Increment of the 2N-dimensional Brownian motion over the addressed interval."""
        return self._cached(int(segment), int(step), tuple(path), float(dt))
