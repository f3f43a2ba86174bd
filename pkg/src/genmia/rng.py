"""Reproducible random streams addressed by ``(seed, stream_id)``.

Every consumer of randomness asks for its own stream so that adding a draw in
one place never shifts the draws seen anywhere else. Streams are backed by the
counter-based Philox generator, which gives the same sequence on every
platform for a given key.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

_U64 = (1 << 64) - 1


def stream_key(label: str | int) -> int:
    """Stable non-negative integer for a stream label (strings are CRC-hashed)."""
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"stream id must be non-negative, got {label}")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


@dataclass(frozen=True)
class RngSeed:
    """A 64-bit seed plus a path of stream ids.

    ``RngSeed(7).child("data")`` and ``RngSeed(7).child("init")`` yield
    independent streams; the same path always reproduces the same draws.
    """

    seed: int
    stream_id: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _U64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))
        sid = self.stream_id
        if isinstance(sid, (int, str, np.integer)):
            sid = (sid,)
        object.__setattr__(self, "stream_id", tuple(stream_key(s) for s in sid))

    def child(self, *labels: str | int) -> "RngSeed":
        return RngSeed(self.seed, self.stream_id + tuple(stream_key(lab) for lab in labels))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.Philox(ss))

    def token(self) -> str:
        return f"{self.seed}:" + ".".join(str(s) for s in self.stream_id)


def as_seed(seed: RngSeed | int) -> RngSeed:
    return seed if isinstance(seed, RngSeed) else RngSeed(int(seed))
