"""SplitMix64 random streams with keyed stream splitting.

Every random decision in a run draws from its own stream, so results do not
depend on scheduling or worker count.

Stream derivation
-----------------
``stream_seed(*parts)`` joins ``str(part)`` for each part with the unit
separator ``"\\x1f"``, UTF-8 encodes the result, hashes it with BLAKE2b
(``digest_size=8``) and reads the digest as a little-endian unsigned 64-bit
integer. Algorithms key their streams by
``(run seed, prompt id, generation, operation tag, slot index, ...)``.

Generator
---------
SplitMix64 (Steele, Lea & Flood 2014). With 64-bit wrapping arithmetic::

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

``random()`` returns ``(next() >> 11) * 2**-53``. ``randbelow(n)`` rejects
draws ``>= 2**64 - (2**64 % n)`` and returns ``draw % n``.
"""

from __future__ import annotations

import hashlib
from typing import MutableSequence, Sequence, TypeVar

T = TypeVar("T")

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_TWO64 = 1 << 64


def stream_seed(*parts: object) -> int:
    """Derive a 64-bit stream seed from an ordered key."""
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little")


class SplitMix64:
    """SplitMix64 generator. Not thread-safe; give each consumer its own stream."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    @classmethod
    def from_key(cls, *parts: object) -> "SplitMix64":
        return cls(stream_seed(*parts))

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MUL1) & _MASK64
        z = ((z ^ (z >> 27)) * _MUL2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError(f"randbelow needs n >= 1, got {n}")
        limit = _TWO64 - (_TWO64 % n)
        while True:
            z = self.next_u64()
            if z < limit:
                return z % n

    def choice(self, seq: Sequence[T]) -> T:
        return seq[self.randbelow(len(seq))]

    def sample2(self, n: int) -> tuple[int, int]:
        """Two distinct indices from ``range(n)``, uniformly over ordered pairs."""
        if n < 2:
            raise ValueError("sample2 needs at least two items")
        i = self.randbelow(n)
        j = self.randbelow(n - 1)
        if j >= i:
            j += 1
        return i, j

    def shuffle(self, items: MutableSequence[T]) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
