"""Reproducible, splittable random sources built on Philox counters.

Philox is counter-based: the 128-bit key is (seed, stream_index) and the
256-bit counter addresses blocks of output.  Two sources with equal
(seed, stream_index) produce identical sequences; distinct stream indices
give statistically independent streams.  Ensemble code additionally carves
the counter space into (purpose, step) blocks so that the noise consumed by
a given logical block at a given step never depends on how work is
scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = np.uint64


@dataclass(frozen=True)
class RandomSource:
    """Identifies one reproducible stream: (seed, stream_index)."""

    seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if not 0 <= int(self.stream_index) < 2 ** 64:
            raise ValueError("stream_index must be a nonnegative 64-bit integer")

    def generator(self) -> np.random.Generator:
        """Fresh generator at the start of this stream."""
        return np.random.Generator(self._bitgen())

    def substream(self, offset: int) -> "RandomSource":
        """Derived source with stream_index shifted by ``offset``."""
        return RandomSource(self.seed, int(self.stream_index) + int(offset))

    def block_generator(self, purpose: int, step: int) -> np.random.Generator:
        """Generator for one (purpose, step) counter block of this stream.

        Each block may consume up to 2**128 outputs without overlapping any
        other block, so per-step noise is addressable independently of
        execution order.
        """
        counter = np.array([0, 0, int(step), int(purpose)], dtype=_U64)
        return np.random.Generator(self._bitgen(counter))

    def _bitgen(self, counter: np.ndarray | None = None) -> np.random.Philox:
        key = np.array([int(self.seed), int(self.stream_index)], dtype=_U64)
        if counter is None:
            return np.random.Philox(key=key)
        return np.random.Philox(key=key, counter=counter)


def standard_complex(gen: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Standard complex Gaussians: (g1 + i g2)/sqrt(2), so E|z|^2 = 1.

    Draws the underlying normals as one (..., 2) block in C order, which
    pins the consumption pattern of the stream.
    """
    g = gen.standard_normal(shape + (2,))
    return (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
