"""Parity embedding of fixed schemes and message bits into carrier blocks.

Each block of ``N`` bits is cut into segments of ``K`` bits spaced ``K + G``
apart.  The last bit of a segment (its target) is set to the parity of the
bits selected by the key mask, XORed with a data bit ``d``: ``d = 0`` gives
the fixed scheme, otherwise ``d`` carries message or filler bits.  Mask
offsets are 1-based positions inside the segment.

With ``G < 0`` segments overlap, and a target can be a parity input of a
later segment.  Segments are processed in increasing order against the
already modified sequence, so a decoder reads parities straight off the
transmitted bits.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .bitio import MEGABIT, BitSequence, BlockView
from .errors import (
    CountExceedsCapacity,
    InvalidGeometry,
    InvalidSkipList,
    KeyFormatError,
    MessageTooLong,
)


@dataclass(frozen=True)
class SegmentGeometry:
    K: int
    G: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise InvalidGeometry(f"K must be >= 2, got {self.K}")
        if self.K + self.G < 1:
            raise InvalidGeometry(f"stride K+G must be >= 1, got {self.K + self.G}")
        if self.G < 0 and -self.G >= self.K:
            raise InvalidGeometry(f"overlap |G| = {-self.G} must be < K = {self.K}")

    @property
    def stride(self) -> int:
        return self.K + self.G


@dataclass(frozen=True)
class EmbedKey:
    geometry: SegmentGeometry
    mask: tuple[int, ...]
    seed: int | None = None  # filler seed; derived from the key material when absent

    def __post_init__(self):
        mask = tuple(sorted(set(int(m) for m in self.mask)))
        if not mask:
            raise InvalidGeometry("mask must be nonempty")
        if mask[0] < 1 or mask[-1] > self.geometry.K - 1:
            raise InvalidGeometry(f"mask offsets must lie in [1, {self.geometry.K - 1}]")
        object.__setattr__(self, "mask", mask)

    @property
    def K(self) -> int:
        return self.geometry.K

    @property
    def G(self) -> int:
        return self.geometry.G

    @classmethod
    def scheme1(cls, K: int, G: int = 0, seed: int | None = None) -> EmbedKey:
        """Full mask: the target is the parity of all K-1 preceding bits."""
        return cls(SegmentGeometry(K, G), tuple(range(1, K)), seed)

    @classmethod
    def scheme2(cls, K: int, G: int, m: int, q: int | Sequence[int], seed: int | None = None) -> EmbedKey:
        """Subset mask ``{m, m+q1, m+q2, ...}``."""
        qs = [q] if isinstance(q, int) else list(q)
        return cls(SegmentGeometry(K, G), (m, *(m + qi for qi in qs)), seed)

    @property
    def is_full(self) -> bool:
        return self.mask == tuple(range(1, self.K))

    def filler_seed(self) -> int:
        return self.seed if self.seed is not None else _derive_seed(repr((self.K, self.G, self.mask)))


@dataclass(frozen=True)
class KeySchedule:
    """Keys applied cyclically along each block, ``count`` segments at a time."""

    entries: tuple[tuple[EmbedKey, int], ...]
    seed: int | None = None

    def __post_init__(self):
        entries = tuple((k, int(c)) for k, c in self.entries)
        if not entries:
            raise InvalidGeometry("schedule needs at least one entry")
        if any(c < 1 for _, c in entries):
            raise InvalidGeometry("segment counts must be >= 1")
        object.__setattr__(self, "entries", entries)

    def filler_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        return _derive_seed(repr([(k.K, k.G, k.mask, c) for k, c in self.entries]))


KeyLike = Union[EmbedKey, KeySchedule]


def _derive_seed(material: str) -> int:
    return int.from_bytes(hashlib.sha256(material.encode()).digest()[:8], "little")


def _entries(key: KeyLike) -> tuple[tuple[EmbedKey, int], ...]:
    return key.entries if isinstance(key, KeySchedule) else ((key, 1),)


# -- segment arithmetic --------------------------------------------------------

def segment_bounds(geometry: SegmentGeometry, n: int) -> tuple[int, int]:
    """(start, target) of segment ``n``; the segment exists iff target < N."""
    if n < 0:
        raise ValueError("segment index must be >= 0")
    start = n * geometry.stride
    return start, start + geometry.K - 1


def segment_count(geometry: SegmentGeometry, block_len: int) -> int:
    if block_len < geometry.K:
        return 0
    return (block_len - geometry.K) // geometry.stride + 1


@dataclass(frozen=True)
class SegmentLayout:
    """Positions of every segment of one block under a key."""

    block_len: int
    starts: np.ndarray
    targets: np.ndarray
    inputs: np.ndarray  # flat parity-input positions, grouped by segment
    bounds: np.ndarray  # start of each segment's group in ``inputs``
    spans: np.ndarray | None  # (first, last) input when every mask is contiguous
    dep_segment: np.ndarray  # segment n reading ...
    dep_source: np.ndarray  # ... the target of earlier segment j

    @property
    def count(self) -> int:
        return int(self.starts.size)

    @property
    def sequential(self) -> bool:
        return self.dep_segment.size > 0


@lru_cache(maxsize=64)
def layout(key: KeyLike, block_len: int) -> SegmentLayout:
    entries = _entries(key)
    starts, kidx = [], []
    cursor, e, used = 0, 0, 0
    while True:
        k = entries[e][0]
        if cursor + k.K - 1 >= block_len:
            break
        starts.append(cursor)
        kidx.append(e)
        cursor += k.geometry.stride
        used += 1
        if used == entries[e][1]:
            e, used = (e + 1) % len(entries), 0
        if len(entries) == 1:
            # a single key is periodic: fill the rest arithmetically
            count = segment_count(k.geometry, block_len)
            starts = list(range(0, count * k.geometry.stride, k.geometry.stride))
            kidx = [0] * count
            break
    starts_a = np.asarray(starts, dtype=np.int64)
    kidx_a = np.asarray(kidx, dtype=np.int64)
    Ks = np.asarray([k.K for k, _ in entries], dtype=np.int64)
    targets = starts_a + Ks[kidx_a] - 1 if starts_a.size else starts_a
    if targets.size > 1 and np.any(np.diff(targets) <= 0):
        raise InvalidGeometry("schedule places a target at or before an earlier target")

    offs = [np.asarray(k.mask, dtype=np.int64) - 1 for k, _ in entries]
    sizes = np.asarray([o.size for o in offs], dtype=np.int64)
    off_flat = np.concatenate(offs)
    off_base = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    seg_sizes = sizes[kidx_a]
    bounds = np.concatenate(([0], np.cumsum(seg_sizes)[:-1])).astype(np.int64)
    seg_of = np.repeat(np.arange(starts_a.size), seg_sizes)
    within = np.arange(seg_of.size) - bounds[seg_of]
    inputs = starts_a[seg_of] + off_flat[off_base[kidx_a[seg_of]] + within]

    contiguous = all(o.size == o[-1] - o[0] + 1 for o in offs)
    spans = None
    if contiguous and starts_a.size:
        first = starts_a + np.asarray([o[0] for o in offs])[kidx_a]
        last = starts_a + np.asarray([o[-1] for o in offs])[kidx_a]
        spans = np.stack([first, last], axis=1)

    owner = np.full(block_len, -1, dtype=np.int64)
    owner[targets] = np.arange(targets.size)
    hit = owner[inputs]
    dep = hit >= 0
    return SegmentLayout(block_len, starts_a, targets, inputs, bounds, spans,
                         seg_of[dep], hit[dep])


# -- parity ---------------------------------------------------------------------

def parity(block: BlockView | np.ndarray, n: int, key: EmbedKey) -> int:
    """XOR of the masked bits of segment ``n`` (read as the block is now)."""
    bits = block.bits() if isinstance(block, BlockView) else np.asarray(block)
    start, target = segment_bounds(key.geometry, n)
    if target >= bits.size:
        raise IndexError(f"segment {n} does not exist in a block of {bits.size} bits")
    return int(np.bitwise_xor.reduce(bits[start + np.asarray(key.mask) - 1]))


def block_parities(mat: np.ndarray, lay: SegmentLayout) -> np.ndarray:
    """Parities of every segment of every row, shape ``(rows, segments)``."""
    mat = np.atleast_2d(mat)
    if lay.count == 0:
        return np.zeros((mat.shape[0], 0), dtype=np.uint8)
    if lay.spans is not None:
        prefix = np.zeros((mat.shape[0], mat.shape[1] + 1), dtype=np.uint8)
        np.bitwise_xor.accumulate(mat, axis=1, out=prefix[:, 1:])
        return prefix[:, lay.spans[:, 1] + 1] ^ prefix[:, lay.spans[:, 0]]
    out = np.empty((mat.shape[0], lay.count), dtype=np.uint8)
    rows = max(1, (1 << 24) // max(1, lay.inputs.size))
    for lo in range(0, mat.shape[0], rows):
        gathered = mat[lo:lo + rows][:, lay.inputs]
        out[lo:lo + rows] = np.bitwise_xor.reduceat(gathered, lay.bounds, axis=1)
    return out


def embed_blocks(mat: np.ndarray, key: KeyLike, data: np.ndarray | None = None) -> np.ndarray:
    """Embed data bits (one per segment, default zero) into each row."""
    mat = np.atleast_2d(np.asarray(mat, dtype=np.uint8))
    lay = layout(key, mat.shape[1])
    out = mat.copy()
    if lay.count == 0:
        return out
    orig = mat[:, lay.targets]
    base = block_parities(mat, lay) ^ orig
    if data is not None:
        base ^= np.asarray(data, dtype=np.uint8).reshape(base.shape)
    if lay.sequential:
        # flip of target n = base_n xor flips of the earlier targets it reads
        flips = np.ascontiguousarray(base.T)
        seg, src = lay.dep_segment, lay.dep_source
        cuts = np.flatnonzero(np.diff(seg)) + 1
        for group_seg, group_src in zip(np.split(seg, cuts), np.split(src, cuts)):
            n = group_seg[0]
            if group_src.size == 1:
                flips[n] ^= flips[group_src[0]]
            else:
                flips[n] ^= np.bitwise_xor.reduce(flips[group_src], axis=0)
        base = flips.T
    out[:, lay.targets] = orig ^ base
    return out


def extract_blocks(mat: np.ndarray, key: KeyLike) -> np.ndarray:
    """Data bits ``target xor parity`` of each row, shape ``(rows, segments)``."""
    mat = np.atleast_2d(np.asarray(mat, dtype=np.uint8))
    lay = layout(key, mat.shape[1])
    return block_parities(mat, lay) ^ mat[:, lay.targets]


# -- sequence level ---------------------------------------------------------------

def _check(seq: BitSequence, key: KeyLike, skip: Iterable[int], block_len: int) -> tuple[int, np.ndarray]:
    if block_len < 1:
        raise InvalidGeometry("block_len must be >= 1")
    for k, _ in _entries(key):
        if block_len < k.K:
            raise InvalidGeometry(f"block length {block_len} is shorter than K = {k.K}")
    n_blocks = seq.length // block_len
    skip_a = np.unique(np.asarray(list(skip), dtype=np.int64))
    if skip_a.size and (skip_a[0] < 0 or skip_a[-1] >= n_blocks):
        raise InvalidSkipList(f"skip indices must lie in [0, {n_blocks})")
    active = np.setdiff1d(np.arange(n_blocks), skip_a)
    return n_blocks, active


def capacity(seq_length: int, key: KeyLike, skip: Iterable[int] = (), block_len: int = MEGABIT) -> int:
    n_blocks = seq_length // block_len
    skipped = len({int(s) for s in skip if 0 <= int(s) < n_blocks})
    return (n_blocks - skipped) * layout(key, block_len).count


def ratio(key: KeyLike | SegmentGeometry) -> Fraction:
    """Fraction of bits that are targets: exactly 1/(K+G) for a single key."""
    if isinstance(key, SegmentGeometry):
        return Fraction(1, key.stride)
    entries = _entries(key)
    segs = sum(c for _, c in entries)
    return Fraction(segs, sum(k.geometry.stride * c for k, c in entries))


def key_space(K: int) -> int:
    if K < 2:
        raise InvalidGeometry("K must be >= 2")
    return 2 ** (K - 1)


def filler_bits(seed: int, block_index: int, count: int) -> np.ndarray:
    """Uniform filler for one block, independent of how blocks are chunked."""
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), block_index]))
    return rng.integers(0, 2, size=count, dtype=np.uint8)


def _rebuild(seq: BitSequence, active: np.ndarray, new_rows: np.ndarray, block_len: int) -> BitSequence:
    bits = seq.bits().copy()
    view = bits[: (seq.length // block_len) * block_len].reshape(-1, block_len)
    view[active] = new_rows
    return BitSequence.from_bits(bits)


def _blocks(seq: BitSequence, block_len: int) -> np.ndarray:
    n = seq.length // block_len
    return seq.bits()[: n * block_len].reshape(n, block_len)


def embed_fixed(seq: BitSequence, key: KeyLike, skip: Iterable[int] = (),
                block_len: int = MEGABIT) -> BitSequence:
    _, active = _check(seq, key, skip, block_len)
    mat = _blocks(seq, block_len)
    return _rebuild(seq, active, embed_blocks(mat[active], key), block_len)


def channel_data(message: BitSequence | np.ndarray, key: KeyLike, active: np.ndarray,
                 segments: int) -> np.ndarray:
    """Data bits per (active block, segment): message first, then filler."""
    msg = message.bits() if isinstance(message, BitSequence) else np.asarray(message, dtype=np.uint8)
    seed = key.filler_seed()
    data = np.empty((active.size, segments), dtype=np.uint8)
    for row, b in enumerate(active):
        data[row] = filler_bits(seed, int(b), segments)
    flat = data.reshape(-1)
    flat[: msg.size] = msg
    return data


def embed_message(seq: BitSequence, key: KeyLike, message: BitSequence, skip: Iterable[int] = (),
                  block_len: int = MEGABIT) -> BitSequence:
    _, active = _check(seq, key, skip, block_len)
    segs = layout(key, block_len).count
    cap = active.size * segs
    if message.length > cap:
        raise MessageTooLong(message.length, cap)
    mat = _blocks(seq, block_len)
    data = channel_data(message, key, active, segs)
    return _rebuild(seq, active, embed_blocks(mat[active], key, data), block_len)


def embedded_channel(seq: BitSequence, key: KeyLike, skip: Iterable[int] = (),
                     block_len: int = MEGABIT) -> np.ndarray:
    """All data bits carried by the non-skipped blocks, in segment order."""
    _, active = _check(seq, key, skip, block_len)
    return extract_blocks(_blocks(seq, block_len)[active], key).reshape(-1)


def extract_message(seq: BitSequence, key: KeyLike, skip: Iterable[int] = (),
                    block_len: int = MEGABIT, bit_count: int | None = None) -> BitSequence:
    _, active = _check(seq, key, skip, block_len)
    cap = active.size * layout(key, block_len).count
    if bit_count is None:
        bit_count = cap
    if bit_count > cap:
        raise CountExceedsCapacity(bit_count, cap)
    if bit_count < 0:
        raise ValueError("bit_count must be >= 0")
    # only decode as many blocks as the message spans
    segs = max(1, layout(key, block_len).count)
    need = active[: -(-bit_count // segs)] if bit_count else active[:0]
    d = extract_blocks(_blocks(seq, block_len)[need], key).reshape(-1)
    return BitSequence.from_bits(d[:bit_count])


def verify_embedding(seq: BitSequence, key: KeyLike, block_len: int = MEGABIT) -> np.ndarray:
    """Per block: does every target equal the parity of its inputs?"""
    mat = _blocks(seq, block_len)
    if mat.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    return ~extract_blocks(mat, key).any(axis=1)


def keygen(K: int, G: int = 0, seed: int | None = None) -> EmbedKey:
    """Uniformly random nonempty mask over ``{1..K-1}``."""
    geometry = SegmentGeometry(K, G)
    rng = np.random.default_rng(seed)
    while True:
        picks = rng.integers(0, 2, size=K - 1, dtype=np.uint8)
        if picks.any():
            break
    filler = int(rng.integers(0, 2**63))
    return EmbedKey(geometry, tuple(int(i) + 1 for i in np.flatnonzero(picks)), filler)


# -- key files ----------------------------------------------------------------------

def format_key(key: KeyLike) -> str:
    lines = []
    if isinstance(key, EmbedKey):
        lines += [f"K={key.K}", f"G={key.G}", "MASK=" + ",".join(map(str, key.mask))]
    else:
        for k, c in key.entries:
            lines.append(f"SCHED={k.K},{k.G},{':'.join(map(str, k.mask))},{c}")
    if key.seed is not None:
        lines.append(f"SEED={key.seed}")
    return "\n".join(lines) + "\n"


def parse_key(text: str) -> KeyLike:
    fields: dict[str, str] = {}
    sched: list[tuple[EmbedKey, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KeyFormatError(f"line {lineno}: expected NAME=value")
        name, value = (s.strip() for s in line.split("=", 1))
        name = name.upper()
        try:
            if name == "SCHED":
                parts = value.split(",")
                if len(parts) != 4:
                    raise KeyFormatError(f"line {lineno}: SCHED needs K,G,mask,count")
                k, g, mask, count = parts
                sched.append((EmbedKey(SegmentGeometry(int(k), int(g)),
                                       tuple(int(x) for x in mask.split(":"))), int(count)))
            elif name in ("K", "G", "MASK", "SEED"):
                if name in fields:
                    raise KeyFormatError(f"line {lineno}: duplicate {name}")
                fields[name] = value
            else:
                raise KeyFormatError(f"line {lineno}: unknown field {name}")
        except ValueError as exc:
            if isinstance(exc, (KeyFormatError, InvalidGeometry)):
                raise
            raise KeyFormatError(f"line {lineno}: {exc}") from exc
    try:
        seed = int(fields["SEED"]) if "SEED" in fields else None
        if sched:
            return KeySchedule(tuple(sched), seed)
        if not {"K", "MASK"} <= fields.keys():
            raise KeyFormatError("key file needs K and MASK (or SCHED lines)")
        geometry = SegmentGeometry(int(fields["K"]), int(fields.get("G", "0")))
        return EmbedKey(geometry, tuple(int(x) for x in fields["MASK"].split(",")), seed)
    except ValueError as exc:
        if isinstance(exc, (KeyFormatError, InvalidGeometry)):
            raise
        raise KeyFormatError(str(exc)) from exc


def save_key(key: KeyLike, path: str | Path) -> None:
    Path(path).write_text(format_key(key))


def load_key(path: str | Path) -> KeyLike:
    return parse_key(Path(path).read_text())
