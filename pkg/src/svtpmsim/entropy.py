"""Entropy sources modelling the CPU hardware random number instructions.

Three modes are supported: real OS randomness, a deterministic DRBG for
reproducible test runs, and a faulty source that returns a constant byte
(modelling a broken hardware RNG). A mixing wrapper folds an additional
secret into a base stream, which is the mitigation for the faulty mode.
"""

from __future__ import annotations

import hashlib
import os
import struct

from .errors import EntropyUnavailable

MAX_DRAW = 1024


class EntropySource:
    """Base class; draw(n) returns n random bytes, n <= 1024 per draw."""

    mode = "abstract"

    def __init__(self) -> None:
        self.draw_count = 0

    def draw(self, n: int) -> bytes:
        if not 0 < n <= MAX_DRAW:
            raise ValueError(f"draw size {n} outside 1..{MAX_DRAW}")
        self.draw_count += 1
        return self._generate(n)

    def _generate(self, n: int) -> bytes:
        raise NotImplementedError


class OsEntropy(EntropySource):
    """Host operating-system randomness."""

    mode = "os-entropy"

    def _generate(self, n: int) -> bytes:
        return os.urandom(n)


class DrbgEntropy(EntropySource):
    """Deterministic byte stream: a pure function of the 32-byte seed.

    Blocks are SHA-256(seed || counter); the stream is sliced from
    consecutive blocks, so interleaved draws of any size replay exactly.
    """

    mode = "deterministic"

    def __init__(self, seed) -> None:
        super().__init__()
        if isinstance(seed, int):
            seed = hashlib.sha256(b"drbg-int-seed:" + seed.to_bytes(16, "big", signed=True)).digest()
        if not isinstance(seed, (bytes, bytearray)) or len(seed) == 0:
            raise ValueError("seed must be a non-empty byte string or an int")
        self._seed = bytes(seed)
        self._counter = 0
        self._buffer = b""

    def _generate(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(self._seed + struct.pack(">Q", self._counter)).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def derive(self, label: str) -> "DrbgEntropy":
        """Independent child stream for a named role; stable per label."""
        return DrbgEntropy(hashlib.sha256(self._seed + b"/" + label.encode()).digest())


class FaultyConstantEntropy(EntropySource):
    """Broken hardware RNG that emits one constant byte forever."""

    mode = "faulty-constant"

    def __init__(self, value: int) -> None:
        super().__init__()
        if not 0 <= value <= 0xFF:
            raise ValueError("constant must be a single byte value")
        self.value = value

    def _generate(self, n: int) -> bytes:
        return bytes([self.value]) * n


class MixedEntropy(EntropySource):
    """Folds a fixed secret into a base stream.

    Used to harden a weak instruction-level RNG with a value derived by
    the secure processor: output blocks are SHA-256 over the base draw,
    the mixin and a counter, so two machines sharing a broken base stream
    still diverge when their mixins differ.
    """

    mode = "mixed"

    def __init__(self, base: EntropySource, mixin: bytes) -> None:
        super().__init__()
        if not mixin:
            raise ValueError("mixin must be non-empty")
        self._base = base
        self._mixin = bytes(mixin)
        self._counter = 0
        self._buffer = b""

    def _generate(self, n: int) -> bytes:
        while len(self._buffer) < n:
            block = hashlib.sha256(
                self._base.draw(32) + self._mixin + struct.pack(">Q", self._counter)
            ).digest()
            self._counter += 1
            self._buffer += block
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out


class UnavailableEntropy(EntropySource):
    """Source whose draws always fail; models a missing RNG instruction."""

    mode = "unavailable"

    def _generate(self, n: int) -> bytes:
        raise EntropyUnavailable("hardware entropy instruction failed")
