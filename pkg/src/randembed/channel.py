"""Covert channel: frames carried by the embedded bits of a random stream.

The encoder fills the data bit of every segment with uniform filler while
idle and with frame bits when a message is pending.  A frame is

    sync (32) | length (32) | payload (length bits) | crc32 (32)

with the CRC taken over ``length || payload``, packed MSB-first and padded
with zero bits to a whole byte.  The decoder recovers the data bits as
``target xor parity`` and scans them for sync words.
"""

from __future__ import annotations

import zlib
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rbg
from .bitio import MEGABIT, BitSequence, BitsWriter, iter_file_blocks, unpack_range
from .embed import KeyLike, embed_blocks, extract_blocks, filler_bits, layout
from .errors import InvalidGeometry, MessageTooLong
from .nist.suite import SuiteConfig, SuiteReport, run_suite

SYNC = 0x1ACFFC1D
HEADER_BITS = 64
CRC_BITS = 32
OVERHEAD_BITS = HEADER_BITS + CRC_BITS
MAX_LENGTH = 2**32 - 1


def _int_bits(value: int, width: int) -> np.ndarray:
    return ((value >> np.arange(width - 1, -1, -1)) & 1).astype(np.uint8)


def _bits_int(bits: np.ndarray) -> int:
    return int.from_bytes(np.packbits(bits).tobytes(), "big") >> (-bits.size % 8)


SYNC_BITS = _int_bits(SYNC, 32)


def crc32_bits(bits: np.ndarray) -> int:
    """CRC-32 (reflected 0x04C11DB7) of a bit string packed MSB-first, zero padded."""
    return zlib.crc32(np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()) & 0xFFFFFFFF


@dataclass(frozen=True)
class Frame:
    payload: BitSequence

    def __post_init__(self):
        if self.payload.length > MAX_LENGTH:
            raise ValueError("payload longer than 2^32 - 1 bits")

    @property
    def length(self) -> int:
        return self.payload.length

    @property
    def crc(self) -> int:
        return crc32_bits(np.concatenate([_int_bits(self.length, 32), self.payload.bits()]))

    def bits(self) -> np.ndarray:
        return np.concatenate([SYNC_BITS, _int_bits(self.length, 32), self.payload.bits(),
                               _int_bits(self.crc, 32)])

    def __len__(self) -> int:
        return OVERHEAD_BITS + self.length


def as_payload(message: BitSequence | bytes | str) -> BitSequence:
    if isinstance(message, BitSequence):
        return message
    if isinstance(message, str):
        message = message.encode("utf-8")
    return BitSequence(message, 8 * len(message))


@dataclass(frozen=True)
class ChannelSession:
    key: KeyLike
    carrier: rbg.RbgConfig = rbg.RbgConfig()
    block_len: int = MEGABIT
    filler_seed: int | None = None
    max_payload_bits: int = 1 << 26  # decoder policy: longer lengths are treated as false syncs

    def __post_init__(self):
        if layout(self.key, self.block_len).count == 0:
            raise InvalidGeometry(f"block length {self.block_len} holds no segment of the key")

    @property
    def segments(self) -> int:
        return layout(self.key, self.block_len).count

    @property
    def seed(self) -> int:
        return self.filler_seed if self.filler_seed is not None else self.key.filler_seed()


class ChannelEncoder:
    """Turns carrier blocks into stream blocks, one block at a time."""

    def __init__(self, session: ChannelSession):
        self.session = session
        self.block_index = 0
        self.position = 0  # channel bits emitted so far
        self._frames: list[tuple[int, np.ndarray]] = []
        self._free_at = 0

    def send(self, message: BitSequence | bytes | str, at: int | None = None) -> int:
        """Queue a message; it starts at channel bit ``max(at, end of queue)``.

        Returns the channel position of the frame's first bit.
        """
        bits = Frame(as_payload(message)).bits()
        start = max(self.position if at is None else at, self._free_at, self.position)
        self._frames.append((start, bits))
        self._free_at = start + bits.size
        return start

    @property
    def pending_bits(self) -> int:
        return max(0, self._free_at - self.position)

    def data_for_block(self) -> np.ndarray:
        s = self.session
        segs = s.segments
        d = filler_bits(s.seed, self.block_index, segs)
        lo, hi = self.position, self.position + segs
        still = []
        for start, bits in self._frames:
            end = start + bits.size
            a, b = max(start, lo), min(end, hi)
            if a < b:
                d[a - lo:b - lo] = bits[a - start:b - start]
            if end > hi:
                still.append((start, bits))
        self._frames = still
        return d

    def encode_block(self, carrier_block: np.ndarray) -> np.ndarray:
        if carrier_block.size != self.session.block_len:
            raise ValueError("carrier block has the wrong length")
        d = self.data_for_block()
        out = embed_blocks(carrier_block[None, :], self.session.key, d[None, :])[0]
        self.block_index += 1
        self.position += d.size
        return out


@dataclass
class Diagnostics:
    sync_candidates: int = 0
    crc_failures: int = 0
    oversize_lengths: int = 0
    truncated: int = 0
    frames: int = 0
    channel_bits: int = 0
    frame_positions: list[int] = field(default_factory=list)


class ChannelDecoder:
    """Incremental decoder: feed stream blocks, collect payloads."""

    def __init__(self, session: ChannelSession):
        self.session = session
        self.diagnostics = Diagnostics()
        self.payloads: list[BitSequence] = []
        self._buf = np.zeros(0, dtype=np.uint8)
        self._base = 0  # channel position of _buf[0]
        self._scan = 0  # next offset in _buf to test for sync

    def feed_block(self, stream_block: np.ndarray) -> list[BitSequence]:
        if stream_block.size != self.session.block_len:
            return []  # tail bits carry no segments
        d = extract_blocks(stream_block[None, :], self.session.key)[0]
        return self.feed_channel(d)

    def feed_channel(self, d: np.ndarray) -> list[BitSequence]:
        self.diagnostics.channel_bits += d.size
        self._buf = np.concatenate([self._buf, d.astype(np.uint8)])
        return self._drain(final=False)

    def finish(self) -> list[BitSequence]:
        return self._drain(final=True)

    def _sync_hits(self, lo: int, span: int = 1 << 16) -> np.ndarray:
        """Sync positions starting in ``[lo, lo + span)``."""
        hi = min(self._buf.size, lo + span + 31)
        if hi - lo < 32:
            return np.zeros(0, dtype=np.int64)
        win = np.lib.stride_tricks.sliding_window_view(self._buf[lo:hi], 32)
        hits = np.ones(win.shape[0], dtype=bool)
        for i in range(32):
            hits &= win[:, i] == SYNC_BITS[i]
        return np.flatnonzero(hits) + lo

    def _drain(self, final: bool) -> list[BitSequence]:
        out: list[BitSequence] = []
        dg = self.diagnostics
        buf = self._buf
        pos = self._scan
        while True:
            hits = self._sync_hits(pos)
            if hits.size == 0:
                if pos + (1 << 16) + 31 < buf.size:
                    pos += 1 << 16
                    continue
                pos = max(pos, buf.size - 31)
                break
            i = int(hits[0])
            dg.sync_candidates += 1
            if i + HEADER_BITS > buf.size:
                if final:
                    dg.truncated += 1
                    pos = i + 1
                    continue
                pos = i
                dg.sync_candidates -= 1  # will be counted again once complete
                break
            length = _bits_int(buf[i + 32:i + 64])
            if length > self.session.max_payload_bits:
                dg.oversize_lengths += 1
                pos = i + 1
                continue
            end = i + OVERHEAD_BITS + length
            if end > buf.size:
                if final:
                    dg.truncated += 1
                    pos = i + 1
                    continue
                pos = i
                dg.sync_candidates -= 1
                break
            body = buf[i + 32:i + 64 + length]
            crc = _bits_int(buf[end - 32:end])
            if crc32_bits(body) != crc:
                dg.crc_failures += 1
                pos = i + 1
                continue
            payload = BitSequence.from_bits(buf[i + 64:i + 64 + length])
            out.append(payload)
            dg.frames += 1
            dg.frame_positions.append(self._base + i)
            pos = end
        # drop consumed bits so the buffer stays bounded
        cut = max(0, min(pos, buf.size))
        self._buf = buf[cut:]
        self._base += cut
        self._scan = pos - cut
        self.payloads.extend(out)
        return out


# -- whole-stream helpers -------------------------------------------------------------

def frame_bits_needed(messages: Sequence) -> int:
    return sum(OVERHEAD_BITS + as_payload(m).length for m in messages)


def stream_blocks_needed(session: ChannelSession, messages: Sequence, lead_in: int = 0) -> int:
    bits = lead_in + frame_bits_needed(messages)
    return max(1, -(-bits // session.segments))


def carrier_for(session: ChannelSession, length: int) -> BitSequence:
    return rbg.generate(rbg.RbgConfig(session.carrier.source, session.carrier.adc_bits,
                                      session.carrier.derivative_order, session.carrier.lsb_count, length))


def iter_encode(session: ChannelSession, messages: Sequence, length: int | None = None,
                lead_in: int = 0, carrier: BitSequence | None = None) -> Iterator[np.ndarray]:
    """Yield the stream block by block (then the unembedded tail, if any)."""
    N = session.block_len
    if length is None:
        length = carrier.length if carrier is not None else stream_blocks_needed(session, messages, lead_in) * N
    n_blocks = length // N
    need = lead_in + frame_bits_needed(messages)
    if need > n_blocks * session.segments:
        raise MessageTooLong(need, n_blocks * session.segments)
    if carrier is None:
        carrier = carrier_for(session, length)
    if carrier.length < length:
        raise ValueError(f"carrier holds {carrier.length} bits, stream needs {length}")
    enc = ChannelEncoder(session)
    at = lead_in
    for m in messages:
        at = enc.send(m, at) + OVERHEAD_BITS + as_payload(m).length
    packed = carrier.packed
    for b in range(n_blocks):
        yield enc.encode_block(unpack_range(packed, b * N, (b + 1) * N))
    if length > n_blocks * N:
        yield unpack_range(packed, n_blocks * N, length)


def encode_stream(session: ChannelSession, messages: Sequence = (), length: int | None = None,
                  lead_in: int = 0, carrier: BitSequence | None = None) -> BitSequence:
    parts = list(iter_encode(session, messages, length, lead_in, carrier))
    return BitSequence.from_bits(np.concatenate(parts))


def write_stream(path: str | Path, session: ChannelSession, messages: Sequence = (),
                 length: int | None = None, lead_in: int = 0, carrier: BitSequence | None = None) -> int:
    """Encode straight to a ``.bits`` file, one block in memory at a time."""
    if length is None:
        length = carrier.length if carrier is not None else stream_blocks_needed(session, messages, lead_in) * session.block_len
    with BitsWriter(path, length) as w:
        for block in iter_encode(session, messages, length, lead_in, carrier):
            w.write(block)
    return length


def decode_blocks(blocks, session: ChannelSession) -> ChannelDecoder:
    dec = ChannelDecoder(session)
    for block in blocks:
        dec.feed_block(np.asarray(block, dtype=np.uint8))
    dec.finish()
    return dec


def decode_stream(stream: BitSequence, session: ChannelSession,
                  with_diagnostics: bool = False):
    N = session.block_len
    n_blocks = stream.length // N
    dec = decode_blocks((unpack_range(stream.packed, b * N, (b + 1) * N) for b in range(n_blocks)), session)
    return (dec.payloads, dec.diagnostics) if with_diagnostics else dec.payloads


def decode_file(path: str | Path, session: ChannelSession) -> ChannelDecoder:
    return decode_blocks(iter_file_blocks(path, session.block_len), session)


def eavesdrop_check(stream: BitSequence, suite_config: SuiteConfig | None = None) -> SuiteReport:
    config = suite_config or SuiteConfig()
    if stream.length < config.block_len:
        raise ValueError("stream is shorter than one test block")
    return run_suite(stream, config)
