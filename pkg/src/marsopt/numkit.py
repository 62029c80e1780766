"""Dense numeric substrate: float64 vectors/matrices and reproducible RNG streams.

Vectors and matrices are plain ``numpy.ndarray`` objects in float64. Randomness
goes through :class:`RngStream`, a thin wrapper over numpy's Philox counter-based
bit generator so that every draw sequence is a pure function of ``(seed, stream
path)`` and reproduces bit-for-bit across processes and platforms.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RngStream", "l2_norm", "gauss_draw", "substream", "as_vector"]


class RngStream:
    """Deterministic random stream keyed by a seed and a substream path.

    Built on ``Philox`` (counter-based, published constants) seeded through
    ``numpy.random.SeedSequence(entropy=seed, spawn_key=path)``. Distinct
    ``(seed, path)`` pairs yield independent, non-overlapping draw sequences.
    Gaussians come from numpy's ziggurat implementation of ``standard_normal``.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError("seed must be a non-negative integer")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, stream_id: int) -> "RngStream":
        """Child stream; independent of the parent and of other ids."""
        return RngStream(self.seed, self.path + (int(stream_id),))

    def gauss(self, n: int) -> np.ndarray:
        if n <= 0:
            raise ValueError("n must be positive")
        return self._gen.standard_normal(n)

    def gauss_matrix(self, m: int, n: int) -> np.ndarray:
        if m <= 0 or n <= 0:
            raise ValueError("matrix dimensions must be positive")
        return self._gen.standard_normal((m, n))

    def uniform(self, n: int) -> np.ndarray:
        return self._gen.random(n)

    def integers(self, low: int, high: int, size: int) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def choice(self, n: int, k: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=k, replace=replace)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"


def as_vector(x) -> np.ndarray:
    """Coerce to a 1-d float64 array without copying when possible."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        v = v.reshape(-1)
    return v


def l2_norm(v: np.ndarray) -> float:
    """Euclidean norm; rejects non-finite input instead of propagating NaN."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("l2_norm: empty vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite input")
    return float(np.sqrt(np.dot(v.ravel(), v.ravel())))


def gauss_draw(rng: RngStream, n: int) -> np.ndarray:
    """n i.i.d. standard-normal draws, advancing the stream deterministically."""
    return rng.gauss(n)


def substream(rng: RngStream, stream_id: int) -> RngStream:
    """Deterministic child stream of ``rng`` (see :meth:`RngStream.substream`)."""
    return rng.substream(stream_id)
