"""Packed bit sequences, block partitioning and the on-disk formats.

Bits are packed MSB-first within each byte.  A :class:`BitSequence` never
changes after construction; every transformation returns a new object.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, NamedTuple

import numpy as np

from .errors import BadHeader, InvalidCharacter, Truncated

MAGIC = b"RNDEMBED"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sHQ")
HEADER_SIZE = _HEADER.size

MEGABIT = 1_000_000


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class BitSequence:
    """Immutable sequence of bits stored packed, MSB-first."""

    __slots__ = ("_packed", "_length", "_bits")

    def __init__(self, packed: bytes | bytearray | np.ndarray, length: int):
        buf = np.frombuffer(bytes(packed), dtype=np.uint8) if not isinstance(packed, np.ndarray) else packed
        buf = np.array(buf, dtype=np.uint8, copy=True)
        if length < 0:
            raise ValueError("length must be non-negative")
        need = (length + 7) // 8
        if buf.size < need:
            raise Truncated(f"{buf.size} bytes cannot hold {length} bits")
        buf = buf[:need]
        if length % 8:
            buf[-1] &= (0xFF << (8 - length % 8)) & 0xFF
        self._packed = _readonly(buf)
        self._length = int(length)
        self._bits: np.ndarray | None = None

    @classmethod
    def from_bits(cls, bits: Iterable[int] | np.ndarray) -> BitSequence:
        arr = np.asarray(bits if isinstance(bits, np.ndarray) else list(bits), dtype=np.uint8)
        if arr.ndim != 1:
            arr = arr.reshape(-1)
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        seq = cls(np.packbits(arr), arr.size)
        seq._bits = _readonly(arr.copy())
        return seq

    @classmethod
    def zeros(cls, length: int) -> BitSequence:
        return cls(np.zeros((length + 7) // 8, dtype=np.uint8), length)

    def __len__(self) -> int:
        return self._length

    @property
    def length(self) -> int:
        return self._length

    @property
    def packed(self) -> np.ndarray:
        """Read-only packed bytes (trailing pad bits are zero)."""
        return self._packed

    def bits(self) -> np.ndarray:
        """Read-only uint8 array of 0/1 values, unpacked once and cached."""
        if self._bits is None:
            self._bits = _readonly(np.unpackbits(self._packed, count=self._length))
        return self._bits

    def get(self, i: int) -> int:
        if not 0 <= i < self._length:
            raise IndexError(f"bit index {i} out of range for length {self._length}")
        return (int(self._packed[i >> 3]) >> (7 - (i & 7))) & 1

    def __getitem__(self, key: int | slice) -> int | BitSequence:
        if isinstance(key, slice):
            return BitSequence.from_bits(self.bits()[key])
        if key < 0:
            key += self._length
        return self.get(key)

    def __iter__(self):
        return iter(int(b) for b in self.bits())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitSequence):
            return NotImplemented
        return self._length == other._length and np.array_equal(self._packed, other._packed)

    def __hash__(self) -> int:
        return hash((self._length, self._packed.tobytes()))

    def __add__(self, other: BitSequence) -> BitSequence:
        return concat([self, other])

    def __repr__(self) -> str:
        if self._length <= 64:
            return f"BitSequence('{self.to_ascii()}')"
        return f"BitSequence(length={self._length})"

    def to_ascii(self) -> str:
        return (self.bits() + np.uint8(ord("0"))).tobytes().decode("ascii")

    def tobytes(self) -> bytes:
        return self._packed.tobytes()


def concat(parts: Iterable[BitSequence]) -> BitSequence:
    arrays = [p.bits() for p in parts]
    if not arrays:
        return BitSequence.zeros(0)
    return BitSequence.from_bits(np.concatenate(arrays))


def from_ascii(text: str) -> BitSequence:
    """Parse '0'/'1' characters; whitespace is skipped."""
    raw = np.frombuffer(text.encode("utf-8", "surrogateescape"), dtype=np.uint8)
    is_space = np.isin(raw, np.frombuffer(b" \t\r\n\v\f", dtype=np.uint8))
    is_digit = (raw == ord("0")) | (raw == ord("1"))
    bad = np.flatnonzero(~(is_space | is_digit))
    if bad.size:
        pos = int(bad[0])
        # report the character position, not the byte offset
        char_pos = len(text.encode("utf-8", "surrogateescape")[:pos].decode("utf-8", "replace"))
        raise InvalidCharacter(char_pos, text[char_pos])
    return BitSequence.from_bits(raw[is_digit] - ord("0"))


def read_packed(data: bytes | bytearray | memoryview, bit_count: int) -> BitSequence:
    need = (bit_count + 7) // 8
    if len(data) < need:
        raise Truncated(f"need {need} bytes for {bit_count} bits, got {len(data)}")
    return BitSequence(bytes(data[:need]), bit_count)


def write_packed(seq: BitSequence) -> bytes:
    return seq.tobytes()


@dataclass(frozen=True)
class BlockView:
    """A length-``length`` window of ``parent`` starting at ``offset``."""

    parent: BitSequence
    block_index: int
    offset: int
    length: int

    def __post_init__(self):
        if self.offset < 0 or self.offset + self.length > self.parent.length:
            raise ValueError("block view exceeds parent sequence")

    def bits(self) -> np.ndarray:
        return self.parent.bits()[self.offset:self.offset + self.length]

    def to_sequence(self) -> BitSequence:
        return BitSequence.from_bits(self.bits())


class Partition(NamedTuple):
    blocks: list[BlockView]
    tail: BlockView


def partition(seq: BitSequence, block_len: int) -> Partition:
    """Split into ``len(seq) // block_len`` full blocks plus a tail view."""
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    count = seq.length // block_len
    blocks = [BlockView(seq, i, i * block_len, block_len) for i in range(count)]
    tail_offset = count * block_len
    tail = BlockView(seq, count, tail_offset, seq.length - tail_offset)
    return Partition(blocks, tail)


def block_matrix(seq: BitSequence, block_len: int) -> np.ndarray:
    """Full blocks as a read-only ``(n_blocks, block_len)`` uint8 view."""
    count = seq.length // block_len
    return seq.bits()[: count * block_len].reshape(count, block_len)


# -- files -----------------------------------------------------------------

def write_bits_file(seq: BitSequence, dest: str | Path | BinaryIO) -> None:
    """Write the packed ``.bits`` format: header then packed payload."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, seq.length)
    if hasattr(dest, "write"):
        dest.write(header)
        dest.write(seq.tobytes())
        return
    with open(dest, "wb") as fh:
        fh.write(header)
        fh.write(seq.tobytes())


def read_bits_file(src: str | Path | BinaryIO) -> BitSequence:
    if hasattr(src, "read"):
        data = src.read()
    else:
        data = Path(src).read_bytes()
    if len(data) < HEADER_SIZE:
        raise BadHeader("file shorter than the .bits header")
    magic, version, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadHeader(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise BadHeader(f"unsupported .bits version {version}")
    return read_packed(memoryview(data)[HEADER_SIZE:], count)


def write_ascii_file(seq: BitSequence, dest: str | Path, line_width: int = 0) -> None:
    text = seq.to_ascii()
    if line_width > 0:
        text = "\n".join(text[i:i + line_width] for i in range(0, len(text), line_width))
    Path(dest).write_text(text + "\n")


def read_ascii_file(src: str | Path) -> BitSequence:
    return from_ascii(Path(src).read_text())


def guess_format(path: str | Path) -> str:
    return "ascii" if str(path).endswith(".txt") else "packed"


def load(path: str | Path, fmt: str | None = None) -> BitSequence:
    fmt = fmt or guess_format(path)
    if fmt == "ascii":
        return read_ascii_file(path)
    if fmt == "packed":
        return read_bits_file(path)
    raise ValueError(f"unknown format {fmt!r}")


def save(seq: BitSequence, path: str | Path, fmt: str | None = None) -> None:
    fmt = fmt or guess_format(path)
    if fmt == "ascii":
        write_ascii_file(seq, path)
    elif fmt == "packed":
        write_bits_file(seq, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def unpack_range(packed: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Bits ``[start, stop)`` of a packed buffer, without unpacking the rest."""
    chunk = np.unpackbits(packed[start // 8:(stop + 7) // 8])
    lo = start % 8
    return chunk[lo:lo + stop - start]


class BitsWriter:
    """Incremental writer for the packed ``.bits`` format.

    The total bit count goes into the header up front; ``close`` checks that
    exactly that many bits were written.
    """

    def __init__(self, path: str | Path, bit_count: int):
        self._fh = open(path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, bit_count))
        self._expected = bit_count
        self._written = 0
        self._carry = np.zeros(0, dtype=np.uint8)

    def write(self, bits: np.ndarray) -> None:
        bits = np.concatenate([self._carry, np.asarray(bits, dtype=np.uint8)])
        whole = bits.size - bits.size % 8
        self._fh.write(np.packbits(bits[:whole]).tobytes())
        self._carry = bits[whole:]
        self._written += bits.size - self._carry.size

    def close(self) -> None:
        if self._carry.size:
            self._fh.write(np.packbits(self._carry).tobytes())
            self._written += self._carry.size
            self._carry = self._carry[:0]
        self._fh.close()
        if self._written != self._expected:
            raise Truncated(f"wrote {self._written} bits, header declares {self._expected}")

    def __enter__(self) -> BitsWriter:
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:
            self._fh.close()


def iter_file_blocks(path: str | Path, block_len: int):
    """Yield successive ``block_len``-bit arrays of a ``.bits`` file, then the tail."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE:
            raise BadHeader("file shorter than the .bits header")
        magic, version, count = _HEADER.unpack(head)
        if magic != MAGIC or version != FORMAT_VERSION:
            raise BadHeader("not a version-1 .bits file")
        pending = np.zeros(0, dtype=np.uint8)
        remaining = count
        step = max(1, block_len // 8 + 1)
        while remaining > 0 or pending.size:
            while pending.size < block_len and remaining > 0:
                raw = fh.read(step)
                if not raw:
                    raise Truncated(f"file ends {remaining} bits early")
                bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:remaining]
                remaining -= bits.size
                pending = np.concatenate([pending, bits])
            take = min(block_len, pending.size)
            yield pending[:take]
            pending = pending[take:]
