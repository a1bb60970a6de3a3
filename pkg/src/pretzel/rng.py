"""Seedable deterministic randomness.

All key generation, encryption randomness, blinding noise, and garbling
labels draw from :class:`StreamRng`, a SHA-256 counter-mode generator.
Seeding makes protocol runs reproducible in tests; fresh entropy comes
from :func:`os.urandom` when no seed is given.
"""

from __future__ import annotations

import hashlib
import math
import os


class StreamRng:
    """Deterministic byte stream expanded from a 32-byte seed."""

    def __init__(self, seed: bytes | None = None):
        if seed is None:
            seed = os.urandom(32)
        if len(seed) != 32:
            seed = hashlib.sha256(seed).digest()
        self._seed = seed
        self._counter = 0
        self._buf = b""

    def randbytes(self, n: int) -> bytes:
        while len(self._buf) < n:
            block = hashlib.sha256(
                self._seed + self._counter.to_bytes(8, "little")
            ).digest()
            self._counter += 1
            self._buf += block
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def getrandbits(self, k: int) -> int:
        if k <= 0:
            return 0
        nbytes = (k + 7) // 8
        v = int.from_bytes(self.randbytes(nbytes), "little")
        return v >> (nbytes * 8 - k)

    def randrange(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        k = bound.bit_length()
        while True:
            v = self.getrandbits(k)
            if v < bound:
                return v

    def uniform01(self) -> float:
        return self.getrandbits(53) / (1 << 53)

    def gauss(self, sigma: float) -> float:
        # Box-Muller; one value per call keeps the stream position simple.
        u1 = self.uniform01()
        u2 = self.uniform01()
        while u1 == 0.0:
            u1 = self.uniform01()
        return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def spawn(self, label: bytes) -> "StreamRng":
        """Independent substream, stable under the parent's consumption."""
        return StreamRng(hashlib.sha256(self._seed + b"/" + label).digest())
