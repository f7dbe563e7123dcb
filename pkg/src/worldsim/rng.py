"""Counter-based deterministic random streams.

Every random draw in the simulation comes from a named Stream keyed by
(seed, name, counter). Unlike a Mersenne state, the counter is a single
integer, so streams serialize into saves trivially and replay exactly.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


class Stream:
    """A deterministic random stream identified by a seed and a name."""

    def __init__(self, seed: int, name: str, counter: int = 0):
        self.seed = seed & _MASK64
        self.name = name
        self.counter = counter
        self._key = self.seed.to_bytes(8, "little")

    def _next_u64(self) -> int:
        msg = f"{self.name}:{self.counter}".encode()
        self.counter += 1
        digest = hashlib.blake2b(msg, key=self._key, digest_size=8).digest()
        return int.from_bytes(digest, "little")

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return self._next_u64() / 2**64

    def randint(self, a: int, b: int) -> int:
        """Uniform integer in [a, b] inclusive."""
        if b < a:
            raise ValueError("empty range")
        span = b - a + 1
        # rejection sampling to avoid modulo bias
        limit = (2**64 // span) * span
        while True:
            u = self._next_u64()
            if u < limit:
                return a + u % span

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.random()

    def choice(self, seq):
        if not seq:
            raise IndexError("choice from empty sequence")
        return seq[self.randint(0, len(seq) - 1)]

    def weighted_choice(self, items, weights):
        total = float(sum(weights))
        r = self.random() * total
        acc = 0.0
        for item, w in zip(items, weights):
            acc += w
            if r < acc:
                return item
        return items[-1]

    def shuffle(self, lst: list) -> None:
        for i in range(len(lst) - 1, 0, -1):
            j = self.randint(0, i)
            lst[i], lst[j] = lst[j], lst[i]

    def sample(self, seq, k: int) -> list:
        if k > len(seq):
            raise ValueError("sample larger than population")
        pool = list(seq)
        self.shuffle(pool)
        return pool[:k]

    def fork(self, name: str) -> "Stream":
        """Derive an independent child stream."""
        return Stream(self.seed ^ self._next_u64(), f"{self.name}/{name}")
