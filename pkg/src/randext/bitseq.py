"""Bit-string and bit-stream primitives shared by every other module.

Finite words over {0,1} are ``BitString`` values (immutable, array-backed,
index 0 = leftmost / most significant bit).  Pull-based bit sources are
``BitStream`` objects; every source can be reset and replayed, which is what
makes rate traces reproducible.  Exact dyadic intervals live here too, as
``RatInterval`` over ``fractions.Fraction`` — no floats anywhere a
containment test happens.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .errors import StallError, ValidationError

BitsLike = Union["BitString", Iterable[int], np.ndarray, str]


def _coerce_bits(bits: BitsLike) -> np.ndarray:
    """Normalize any bits-like input to a read-only uint8 array of 0/1."""
    if isinstance(bits, BitString):
        return bits._bits
    if isinstance(bits, str):
        try:
            arr = np.array([int(c) for c in bits], dtype=np.uint8)
        except ValueError:
            raise ValidationError(f"not a bit string: {bits!r}")
    else:
        arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1 and arr.size != 0:
        raise ValidationError("bits must be one-dimensional")
    arr = arr.reshape(-1)
    if arr.size and arr.max() > 1:
        raise ValidationError("bits must be 0 or 1")
    return arr


class BitString:
    """An immutable finite binary string.

    Supports concatenation (``+``), slicing (returns ``BitString``),
    prefix tests, and conversion to/from integers under the MSB-first
    reading (``lex_rank``).
    """

    __slots__ = ("_bits",)

    def __init__(self, bits: BitsLike = ()):
        arr = _coerce_bits(bits)
        if arr.flags.writeable or arr.base is not None:
            arr = arr.copy()
        arr.flags.writeable = False
        self._bits = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "BitString":
        """Wrap a trusted array without copying (arr must be owned, 0/1)."""
        s = cls.__new__(cls)
        arr.flags.writeable = False
        s._bits = arr
        return s

    @classmethod
    def from_int(cls, value: int, length: int) -> "BitString":
        """The length-`length` string whose lexicographic rank is `value`."""
        if value < 0 or value >= (1 << length):
            raise ValidationError(f"value {value} out of range for length {length}")
        arr = np.empty(length, dtype=np.uint8)
        for i in range(length - 1, -1, -1):
            arr[i] = value & 1
            value >>= 1
        return cls._wrap(arr)

    @classmethod
    def zeros(cls, n: int) -> "BitString":
        return cls._wrap(np.zeros(n, dtype=np.uint8))

    @classmethod
    def ones(cls, n: int) -> "BitString":
        return cls._wrap(np.ones(n, dtype=np.uint8))

    @property
    def bits(self) -> np.ndarray:
        """Read-only uint8 view of the bits."""
        return self._bits

    def __len__(self) -> int:
        return self._bits.shape[0]

    def __iter__(self) -> Iterator[int]:
        return iter(int(b) for b in self._bits)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return BitString._wrap(self._bits[idx].copy())
        return int(self._bits[idx])

    def __add__(self, other: BitsLike) -> "BitString":
        other_arr = _coerce_bits(other)
        return BitString._wrap(np.concatenate([self._bits, other_arr]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return (
            self._bits.shape == other._bits.shape
            and bool(np.array_equal(self._bits, other._bits))
        )

    def __hash__(self) -> int:
        return hash((self._bits.shape[0], self._bits.tobytes()))

    def __repr__(self) -> str:
        return f"BitString({self.to01()!r})"

    def to01(self) -> str:
        return "".join("1" if b else "0" for b in self._bits)

    def is_prefix_of(self, other: "BitString") -> bool:
        """The prefix partial order sigma <= tau."""
        if len(self) > len(other):
            return False
        return bool(np.array_equal(self._bits, other._bits[: len(self)]))

    def lex_rank(self) -> int:
        """Rank among strings of the same length under lexicographic order.

        Equals the integer whose binary representation, left-padded to
        ``len(self)``, is this string.
        """
        r = 0
        for b in self._bits:
            r = (r << 1) | int(b)
        return r

    def dyadic_interval(self) -> "RatInterval":
        """The Lebesgue interval of this string: [rank/2^n, (rank+1)/2^n]."""
        n = len(self)
        r = self.lex_rank()
        return RatInterval(Fraction(r, 1 << n), Fraction(r + 1, 1 << n))


EPSILON = BitString()


def lex_rank(sigma: BitString) -> int:
    """Number of strings of length |sigma| strictly below sigma lexicographically."""
    return sigma.lex_rank()


def dyadic_interval(sigma: BitString) -> "RatInterval":
    """Exact dyadic interval of sigma; width is 2^-|sigma|."""
    return sigma.dyadic_interval()


def common_prefix(a: BitString, b: BitString) -> BitString:
    """Longest common initial segment of two strings."""
    n = min(len(a), len(b))
    ab, bb = a.bits[:n], b.bits[:n]
    diff = np.nonzero(ab != bb)[0]
    k = int(diff[0]) if diff.size else n
    return a[:k]


@dataclass(frozen=True)
class RatInterval:
    """A closed interval [lo, hi] with exact rational endpoints in [0,1]."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValidationError(f"empty interval: {self.lo} > {self.hi}")

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def contains_interval(self, other: "RatInterval") -> bool:
        """Exact containment test: other is a subinterval of self."""
        return self.lo <= other.lo and other.hi <= self.hi

    def contains_point(self, x: Fraction) -> bool:
        return self.lo <= x <= self.hi

    def split_at(self, point: Fraction) -> tuple["RatInterval", "RatInterval"]:
        if not (self.lo <= point <= self.hi):
            raise ValidationError("split point outside interval")
        return RatInterval(self.lo, point), RatInterval(point, self.hi)

    def __repr__(self) -> str:
        return f"[{self.lo}, {self.hi}]"


UNIT = RatInterval(Fraction(0), Fraction(1))


# ---------------------------------------------------------------------------
# Bit streams


class BitStream:
    """A resettable, single-consumer source of bits.

    Subclasses implement ``_fill(k)`` to produce the next chunk of up to
    ``k`` bits (an empty array signals exhaustion) and ``_rewind()`` to
    restore the initial state.  Replaying after ``reset()`` yields the
    identical sequence, and any prefix read agrees with longer reads.
    """

    def __init__(self, stream_id: str = ""):
        self.stream_id = stream_id
        self.position = 0

    def _fill(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def _rewind(self) -> None:
        raise NotImplementedError

    def take(self, k: int) -> np.ndarray:
        """Consume and return exactly k bits (uint8 array).

        Raises StallError when the source cannot supply k more bits; the
        partial read is attached to the error.
        """
        if k < 0:
            raise ValidationError("cannot take a negative number of bits")
        chunks = []
        got = 0
        while got < k:
            chunk = self._fill(k - got)
            if chunk.size == 0:
                partial = (
                    np.concatenate(chunks) if chunks else np.empty(0, dtype=np.uint8)
                )
                self.position += got
                raise StallError(
                    f"stream {self.stream_id or '?'} exhausted after "
                    f"{self.position} bits ({k - got} more requested)",
                    partial=partial,
                )
            chunks.append(chunk)
            got += chunk.size
        self.position += got
        if len(chunks) == 1:
            return chunks[0]
        return np.concatenate(chunks)

    def next(self) -> int:
        """Consume one bit."""
        return int(self.take(1)[0])

    def reset(self) -> None:
        """Rewind to the beginning; the replayed sequence is identical."""
        self._rewind()
        self.position = 0

    def prefix(self, n: int) -> BitString:
        """The first n bits, read from a fresh rewind (leaves stream reset)."""
        self.reset()
        bits = BitString._wrap(self.take(n).copy())
        self.reset()
        return bits


class ArrayStream(BitStream):
    """Stream over a fixed, finite bit array (or BitString)."""

    def __init__(self, bits: BitsLike, stream_id: str = "array"):
        super().__init__(stream_id)
        self._data = _coerce_bits(bits)
        self._cursor = 0

    def _fill(self, k: int) -> np.ndarray:
        chunk = self._data[self._cursor : self._cursor + k]
        self._cursor += chunk.size
        return chunk

    def _rewind(self) -> None:
        self._cursor = 0


class FunctionStream(BitStream):
    """Stream backed by a chunk generator ``f(rng_state, k) -> bits``.

    Used by measures.sample-backed streams; the factory recreates state on
    reset so replays are exact.
    """

    def __init__(self, make_source, stream_id: str = ""):
        super().__init__(stream_id)
        self._make_source = make_source
        self._source = make_source()

    def _fill(self, k: int) -> np.ndarray:
        return self._source(k)

    def _rewind(self) -> None:
        self._source = self._make_source()


# ---------------------------------------------------------------------------
# Bitstream file format: raw bytes unpacked MSB-first, with an optional
# 8-byte magic "RNDX0001" followed by a little-endian u64 bit count.
# Headerless files are interpreted as 8 * filesize bits.

MAGIC = b"RNDX0001"


def write_bits(path, bits: BitsLike, header: bool = True) -> None:
    """Write bits to a file, MSB-first packed, optionally with a header.

    The header records the exact bit count, so lengths not divisible by 8
    round-trip; without it the count is implied by the file size.
    """
    arr = _coerce_bits(bits)
    packed = np.packbits(arr)  # MSB-first
    with open(path, "wb") as fh:
        if header:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", arr.size))
        fh.write(packed.tobytes())


def read_bits(path) -> np.ndarray:
    """Read a bitstream file (header-aware); returns a uint8 0/1 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] == MAGIC:
        if len(raw) < 16:
            raise ValidationError(f"{path}: truncated header")
        (count,) = struct.unpack("<Q", raw[8:16])
        payload = np.frombuffer(raw[16:], dtype=np.uint8)
        bits = np.unpackbits(payload)
        if count > bits.size:
            raise ValidationError(f"{path}: header claims {count} bits, file has {bits.size}")
        return bits[:count]
    payload = np.frombuffer(raw, dtype=np.uint8)
    return np.unpackbits(payload)


class FileStream(ArrayStream):
    """Stream over a bitstream file."""

    def __init__(self, path):
        super().__init__(read_bits(path), stream_id=f"file:{path}")


def as_stream(source, seed: Optional[int] = None) -> BitStream:
    """Coerce bits / BitString / stream into a BitStream."""
    if isinstance(source, BitStream):
        return source
    return ArrayStream(source)
