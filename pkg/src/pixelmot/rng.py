"""Counter-based random streams.

All randomness flows through `RandomStream`, a frozen wrapper around the
Philox counter generator. Streams are value objects: drawing returns the
samples together with the advanced stream, and `split` derives statistically
independent child streams from a label, so per-sample randomness does not
depend on evaluation order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = ["RandomStream"]

_KEY_BITS = 128


@dataclass(frozen=True)
class RandomStream:
    """An immutable (key, counter) position in a Philox stream.

    The same (key, counter) pair always yields the same draws. Each draw
    occupies a disjoint counter range, so draw k is independent of how many
    values earlier draws consumed.
    """

    key: int
    counter: int = 0

    def __post_init__(self):
        if not 0 <= self.key < (1 << _KEY_BITS):
            raise ValueError(f"key must be a {_KEY_BITS}-bit integer, got {self.key}")
        if self.counter < 0:
            raise ValueError(f"counter must be nonnegative, got {self.counter}")

    @classmethod
    def from_seed(cls, seed: int) -> "RandomStream":
        """Expand a small integer seed into full-width key material."""
        digest = hashlib.sha256(b"pixelmot-seed:" + str(int(seed)).encode()).digest()
        return cls(key=int.from_bytes(digest[:16], "little"))

    def split(self, label: str | int) -> "RandomStream":
        """Derive an independent child stream named by `label`.

        Children of the same parent with distinct labels never share key
        material (SHA-256 of key || label), so they may be consumed in any
        order, concurrently, without coordination.
        """
        material = self.key.to_bytes(16, "little") + b"/" + str(label).encode()
        digest = hashlib.sha256(material).digest()
        return RandomStream(key=int.from_bytes(digest[:16], "little"))

    def _generator(self) -> np.random.Generator:
        # Each draw index owns 2^64 Philox blocks: far more than any single
        # draw here can consume, so draws never overlap.
        return np.random.Generator(
            np.random.Philox(key=self.key, counter=self.counter << 64)
        )

    def normal(self, shape=()) -> tuple[np.ndarray, "RandomStream"]:
        """Standard-normal draw of `shape`; returns (values, advanced stream)."""
        values = self._generator().standard_normal(shape, dtype=np.float64)
        return values, RandomStream(self.key, self.counter + 1)

    def uniform(self, shape=()) -> tuple[np.ndarray, "RandomStream"]:
        """Uniform [0,1) draw of `shape`; returns (values, advanced stream)."""
        values = self._generator().random(shape, dtype=np.float64)
        return values, RandomStream(self.key, self.counter + 1)

    def integers(self, low: int, high: int, shape=()) -> tuple[np.ndarray, "RandomStream"]:
        """Integer draw in [low, high); returns (values, advanced stream)."""
        values = self._generator().integers(low, high, size=shape, dtype=np.int64)
        return values, RandomStream(self.key, self.counter + 1)
