"""Derived random streams.

Every stream is a pure function of ``(master_seed, domain path, stream
indices)``.  Streams are never shared: callers derive a child per unit of
work (trial, chunk, session) so results do not depend on scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_key(tag: str) -> int:
    # Python's hash() is salted per process; blake2b is not.
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


class Rng:
    """A seeded stream identified by ``(master_seed, domain_tag, stream_index)``.

    The underlying generator is PCG64 fed by a ``SeedSequence`` whose spawn
    key encodes the full derivation path.
    """

    __slots__ = ("master_seed", "domain_tag", "stream_index", "_key", "_gen")

    def __init__(self, master_seed: int, domain_tag: str = "root", stream_index: int = 0,
                 _parent_key: tuple[int, ...] = ()):
        if not 0 <= master_seed <= _MASK64:
            raise ValueError("master_seed must fit in 64 bits")
        if not 0 <= stream_index <= _MASK64:
            raise ValueError("stream_index must fit in 64 bits")
        self.master_seed = int(master_seed)
        self.domain_tag = domain_tag
        self.stream_index = int(stream_index)
        self._key = _parent_key + (_tag_key(domain_tag), self.stream_index)
        self._gen: np.random.Generator | None = None

    def child(self, tag: str, index: int = 0) -> "Rng":
        return Rng(self.master_seed, f"{self.domain_tag}/{tag}", index, self._key)

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self._key)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def raw(self, size) -> np.ndarray:
        """Raw 64-bit draws (uint64)."""
        return self.gen.bit_generator.random_raw(size).astype(np.uint64, copy=False)

    def bit(self) -> int:
        return int(self.raw(1)[0] >> np.uint64(63))

    def randbelow(self, bound: int, size=None):
        return self.gen.integers(0, bound, size=size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.master_seed}, tag={self.domain_tag!r}, index={self.stream_index})"
