"""Packed bit strings, per-round device records and their on-disk formats.

Bit ``i`` of a :class:`BitString` lives in bit ``i % 8`` of byte ``i // 8``
(little-endian within each byte), so packed payloads are platform independent.

Raw bit file::

    b"RAPBITS1" | u64 LE bit count | packed payload

Round log::

    b"RAPLOG01" | u64 LE round count | one byte per round

A round byte holds ``x, y, z, a, b, c`` in bits 0..5.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Iterator, Union

import numpy as np

BITS_MAGIC = b"RAPBITS1"
LOG_MAGIC = b"RAPLOG01"
MAX_BITS = 1 << 32
_HEADER = struct.Struct("<8sQ")

PathArg = Union[str, PathLike]


class CorruptFileError(ValueError):
    """Raised when a bit file or round log fails header or size validation."""


class BitString:
    """Immutable, packed bit sequence.

    Construct with :meth:`from_bits`, :meth:`zeros`, :meth:`from_bytes` or
    :meth:`from_str`; the packed payload always has its tail bits cleared.
    """

    __slots__ = ("_length", "_payload")

    def __init__(self, length: int, payload: bytes | np.ndarray):
        if length < 0 or length > MAX_BITS:
            raise ValueError(f"bit length {length} outside [0, 2^32]")
        buf = np.frombuffer(bytes(payload), dtype=np.uint8) if isinstance(payload, (bytes, bytearray)) else np.asarray(payload, dtype=np.uint8)
        nbytes = (length + 7) // 8
        if buf.size != nbytes:
            raise ValueError(f"payload has {buf.size} bytes, expected {nbytes} for {length} bits")
        buf = buf.copy()
        if length % 8:
            buf[-1] &= (1 << (length % 8)) - 1
        buf.setflags(write=False)
        self._length = length
        self._payload = buf

    @classmethod
    def from_bits(cls, bits) -> "BitString":
        """Pack an iterable/array of 0/1 values."""
        arr = np.asarray(bits, dtype=np.uint8).ravel()
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(arr.size, np.packbits(arr, bitorder="little"))

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        """Parse a string like ``"10110"`` (first character is bit 0)."""
        return cls.from_bits([int(ch) for ch in text])

    @classmethod
    def zeros(cls, length: int) -> "BitString":
        return cls(length, np.zeros((length + 7) // 8, dtype=np.uint8))

    @classmethod
    def from_bytes(cls, length: int, payload: bytes) -> "BitString":
        return cls(length, payload)

    def __len__(self) -> int:
        return self._length

    @property
    def length(self) -> int:
        return self._length

    @property
    def payload(self) -> bytes:
        return self._payload.tobytes()

    def to_bits(self) -> np.ndarray:
        """Unpacked ``uint8`` array of 0/1 values (a fresh copy)."""
        return np.unpackbits(self._payload, count=self._length, bitorder="little")

    def __getitem__(self, i: int) -> int:
        if i < 0:
            i += self._length
        if not 0 <= i < self._length:
            raise IndexError(i)
        return int(self._payload[i >> 3] >> (i & 7)) & 1

    def __iter__(self) -> Iterator[int]:
        return iter(self.to_bits().tolist())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return self._length == other._length and bool(np.array_equal(self._payload, other._payload))

    def __hash__(self) -> int:
        return hash((self._length, self.payload))

    def __xor__(self, other: "BitString") -> "BitString":
        return xor(self, other)

    def __repr__(self) -> str:
        if self._length <= 64:
            return f"BitString('{self}')"
        return f"BitString(length={self._length}, sha256={self.digest()[:12]}...)"

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.to_bits())

    def count_ones(self) -> int:
        return int(np.unpackbits(self._payload).sum())

    def padded(self, length: int) -> "BitString":
        """Append zero bits up to ``length``."""
        if length < self._length:
            raise ValueError("cannot pad to a shorter length")
        buf = np.zeros((length + 7) // 8, dtype=np.uint8)
        buf[: self._payload.size] = self._payload
        return BitString(length, buf)

    def to_file_bytes(self) -> bytes:
        return _HEADER.pack(BITS_MAGIC, self._length) + self.payload

    def digest(self) -> str:
        """SHA-256 of the raw bit-file serialization."""
        return hashlib.sha256(self.to_file_bytes()).hexdigest()


def xor(a: BitString, b: BitString) -> BitString:
    if a.length != b.length:
        raise ValueError(f"xor of unequal lengths {a.length} and {b.length}")
    return BitString(a.length, np.bitwise_xor(a._payload, b._payload))


def slice_bits(s: BitString, start: int, length: int) -> BitString:
    """Bits ``[start, start + length)`` of ``s``."""
    if start < 0 or length < 0 or start + length > s.length:
        raise IndexError(f"slice [{start}, {start + length}) out of range for length {s.length}")
    if start % 8 == 0:
        nbytes = (length + 7) // 8
        return BitString(length, s._payload[start // 8 : start // 8 + nbytes])
    return BitString.from_bits(s.to_bits()[start : start + length])


def concat(*parts: BitString) -> BitString:
    if not parts:
        return BitString.zeros(0)
    return BitString.from_bits(np.concatenate([p.to_bits() for p in parts]))


def write_bits(path: PathArg, s: BitString) -> None:
    Path(path).write_bytes(s.to_file_bytes())


def parse_bits(data: bytes) -> BitString:
    if len(data) < _HEADER.size:
        raise CorruptFileError("bit file shorter than its header")
    magic, length = _HEADER.unpack_from(data)
    if magic != BITS_MAGIC:
        raise CorruptFileError(f"bad magic {magic!r}, expected {BITS_MAGIC!r}")
    if length > MAX_BITS:
        raise CorruptFileError(f"declared bit count {length} exceeds 2^32")
    body = data[_HEADER.size :]
    if len(body) != (length + 7) // 8:
        raise CorruptFileError(f"payload has {len(body)} bytes but header declares {length} bits")
    s = BitString(length, body)
    if s.payload != body:
        raise CorruptFileError("nonzero padding bits after declared length")
    return s


def read_bits(path: PathArg) -> BitString:
    return parse_bits(Path(path).read_bytes())


@dataclass(frozen=True)
class RoundRecord:
    x: int
    y: int
    z: int
    a: int
    b: int
    c: int

    def __post_init__(self):
        for name in ("x", "y", "z", "a", "b", "c"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be a bit")

    def pack(self) -> int:
        return self.x | self.y << 1 | self.z << 2 | self.a << 3 | self.b << 4 | self.c << 5

    @classmethod
    def unpack(cls, byte: int) -> "RoundRecord":
        if byte >> 6:
            raise ValueError(f"round byte {byte:#04x} has bits above position 5")
        return cls(*((byte >> k) & 1 for k in range(6)))


@dataclass(eq=False)
class RoundLog:
    """Per-round ``(x, y, z, a, b, c)`` records, stored one packed byte per round.

    ``metadata`` is in-memory only; the on-disk format carries rounds alone.
    """

    packed: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.packed = np.ascontiguousarray(self.packed, dtype=np.uint8)
        if self.packed.ndim != 1:
            raise ValueError("packed rounds must be one-dimensional")
        if self.packed.size and int(self.packed.max()) >> 6:
            raise ValueError("round bytes must fit in 6 bits")

    @classmethod
    def from_arrays(cls, x, y, z, a, b, c, metadata: dict | None = None) -> "RoundLog":
        cols = [np.asarray(v, dtype=np.uint8) for v in (x, y, z, a, b, c)]
        packed = np.zeros(cols[0].shape, dtype=np.uint8)
        for k, col in enumerate(cols):
            packed |= (col & 1) << k
        return cls(packed, dict(metadata or {}))

    @classmethod
    def from_records(cls, records, metadata: dict | None = None) -> "RoundLog":
        return cls(np.array([r.pack() for r in records], dtype=np.uint8), dict(metadata or {}))

    def __len__(self) -> int:
        return int(self.packed.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoundLog):
            return NotImplemented
        return bool(np.array_equal(self.packed, other.packed))

    def __iter__(self) -> Iterator[RoundRecord]:
        for byte in self.packed.tolist():
            yield RoundRecord.unpack(byte)

    def column(self, k: int) -> np.ndarray:
        return (self.packed >> k) & 1

    x = property(lambda self: self.column(0))
    y = property(lambda self: self.column(1))
    z = property(lambda self: self.column(2))
    a = property(lambda self: self.column(3))
    b = property(lambda self: self.column(4))
    c = property(lambda self: self.column(5))

    def inputs_bits(self) -> np.ndarray:
        """Inputs interleaved as they were drawn: ``x0 y0 z0 x1 y1 z1 ...``."""
        return np.stack([self.x, self.y, self.z], axis=1).ravel()

    def to_file_bytes(self) -> bytes:
        return _HEADER.pack(LOG_MAGIC, len(self)) + self.packed.tobytes()

    def digest(self) -> str:
        return hashlib.sha256(self.to_file_bytes()).hexdigest()


def write_roundlog(path: PathArg, log: RoundLog) -> None:
    Path(path).write_bytes(log.to_file_bytes())


def parse_roundlog(data: bytes) -> RoundLog:
    if len(data) < _HEADER.size:
        raise CorruptFileError("round log shorter than its header")
    magic, count = _HEADER.unpack_from(data)
    if magic != LOG_MAGIC:
        raise CorruptFileError(f"bad magic {magic!r}, expected {LOG_MAGIC!r}")
    body = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
    if body.size != count:
        raise CorruptFileError(f"header declares {count} rounds but file holds {body.size}")
    if count and int(body.max()) >> 6:
        raise CorruptFileError("round byte with bits above position 5")
    return RoundLog(body.copy())


def read_roundlog(path: PathArg) -> RoundLog:
    log = parse_roundlog(Path(path).read_bytes())
    log.metadata["source"] = str(path)
    return log
