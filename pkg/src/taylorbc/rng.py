"""Deterministic, splittable random streams.

Every stochastic routine in this package takes an explicit `Rng`; nothing reads
global random state. Streams are addressed by a 64-bit seed plus an integer
spawn path, so a child stream is a pure function of (seed, path) and is
independent of the order in which sibling streams are created or consumed.
That property is what makes serial and parallel experiment sweeps
bit-identical.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Rng"]


class Rng:
    """Philox-backed generator addressed by (seed, spawn path)."""

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
        if seed < 0 or seed > 2**64 - 1:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in _spawn_key)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, *path: int) -> "Rng":
        """Child stream at `path`, independent of sibling creation order."""
        return Rng(self.seed, self.spawn_key + tuple(path))

    # ------------------------------------------------------------------
    # draws (all return float64 / int64 numpy values)
    # ------------------------------------------------------------------

    def normal(self, shape=(), scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(loc=0.0, scale=scale, size=shape)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=()) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def sphere(self, n: int, dim: int, radius: float = 1.0) -> np.ndarray:
        """n points uniform on the sphere of the given radius in R^dim."""
        v = self._gen.normal(size=(n, dim))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        # resample-free guard: a zero draw has probability 0, nudge instead
        norms = np.where(norms < 1e-300, 1.0, norms)
        return radius * v / norms

    def ball(self, n: int, dim: int, radius: float = 1.0) -> np.ndarray:
        """n points uniform in the closed ball of the given radius in R^dim."""
        directions = self.sphere(n, dim, 1.0)
        radii = radius * self._gen.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / dim)
        return directions * radii

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, spawn_key={self.spawn_key})"
