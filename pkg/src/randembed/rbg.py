"""Carrier generation: sample source, p-bit ADC, n-th derivative, m LSBs.

The optical chaotic laser is replaced by a logistic map.  A pseudorandom
source is provided as well; it emits samples already on the ADC grid so the
pipeline maps them onto uniformly distributed residues.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .bitio import BitSequence
from .errors import EmptySeries, SeriesTooShort

LOGISTIC_R = 3.99999
BURN_IN = 1000

# samples per chunk when deriving bits; keeps the uint8 bit buffer bounded
_CHUNK = 1 << 20


@dataclass(frozen=True)
class ChaoticSource:
    seed: int = 0
    r: float = LOGISTIC_R
    burn_in: int = BURN_IN


@dataclass(frozen=True)
class SampleFileSource:
    path: str
    width: int = 1  # bytes per sample: 1 = uint8, 2 = uint16 little-endian


@dataclass(frozen=True)
class PseudorandomSource:
    seed: int = 0


Source = Union[ChaoticSource, SampleFileSource, PseudorandomSource]


@dataclass(frozen=True)
class RbgConfig:
    source: Source = PseudorandomSource()
    adc_bits: int = 8
    derivative_order: int = 3
    lsb_count: int = 5
    output_bits: int = 1_000_000

    def __post_init__(self):
        if self.adc_bits < 1:
            raise ValueError("adc_bits must be >= 1")
        if not 1 <= self.lsb_count <= self.adc_bits:
            raise ValueError("lsb_count must lie in [1, adc_bits]")
        if self.derivative_order < 0:
            raise ValueError("derivative_order must be >= 0")
        if self.output_bits < 1:
            raise ValueError("output_bits must be >= 1")

    @property
    def samples_needed(self) -> int:
        return -(-self.output_bits // self.lsb_count) + self.derivative_order


def logistic_orbit(x0: float, count: int, r: float = LOGISTIC_R, burn_in: int = BURN_IN) -> np.ndarray:
    """``count`` iterates of x <- r x (1 - x) after discarding ``burn_in``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    x = float(x0)
    for _ in range(burn_in):
        x = r * x * (1.0 - x)
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        x = r * x * (1.0 - x)
        out[i] = x
    return out


def chaotic_signal(seed: int, count: int, r: float = LOGISTIC_R, burn_in: int = BURN_IN) -> np.ndarray:
    # the starting point avoids the map's fixed points and their preimages
    x0 = 0.05 + 0.9 * np.random.default_rng(seed).random()
    return logistic_orbit(x0, count, r, burn_in)


def pseudorandom_samples(seed: int, count: int, adc_bits: int = 8) -> np.ndarray:
    """Integer-valued samples uniform on the ADC grid, as floats."""
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 1 << adc_bits, size=count, dtype=np.int64).astype(np.float64)
    # pin the observed range to the full scale so quantize is the identity
    if count >= 2:
        s[0], s[1] = 0.0, float((1 << adc_bits) - 1)
    return s


def load_samples(path: str | Path, width: int = 1) -> np.ndarray:
    raw = Path(path).read_bytes()
    if width == 1:
        return np.frombuffer(raw, dtype=np.uint8).astype(np.float64)
    if width == 2:
        usable = len(raw) - len(raw) % 2
        return np.frombuffer(raw[:usable], dtype="<u2").astype(np.float64)
    raise ValueError("sample width must be 1 or 2 bytes")


def quantize(series, p: int) -> np.ndarray:
    """Min-max rescale onto ``0 .. 2**p - 1`` with round-half-up."""
    if p < 1:
        raise ValueError("p must be >= 1")
    v = np.asarray(series, dtype=np.float64)
    if v.size == 0:
        raise EmptySeries("cannot quantize an empty series")
    if not np.all(np.isfinite(v)):
        raise ValueError("series contains non-finite values")
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.zeros(v.size, dtype=np.int64)
    return np.floor((v - lo) / (hi - lo) * ((1 << p) - 1) + 0.5).astype(np.int64)


def derivative(series, n: int) -> np.ndarray:
    """n-fold forward difference; output is ``n`` samples shorter."""
    s = np.asarray(series, dtype=np.int64)
    if n < 0:
        raise ValueError("order must be >= 0")
    if s.size <= n:
        raise SeriesTooShort(f"series of length {s.size} is too short for order {n}")
    return np.diff(s, n=n) if n else s.copy()


def lsb_bits(series, m: int) -> np.ndarray:
    """Unpacked bits: the m low bits of each value, high to low."""
    if m < 1:
        raise ValueError("m must be >= 1")
    v = np.asarray(series, dtype=np.int64) & ((1 << m) - 1)  # two's complement for negatives
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((v[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def extract_lsbs(series, m: int) -> BitSequence:
    return BitSequence.from_bits(lsb_bits(series, m))


def source_samples(config: RbgConfig) -> np.ndarray:
    src = config.source
    count = config.samples_needed
    if isinstance(src, PseudorandomSource):
        return pseudorandom_samples(src.seed, count, config.adc_bits)
    if isinstance(src, ChaoticSource):
        return chaotic_signal(src.seed, count, src.r, src.burn_in)
    if isinstance(src, SampleFileSource):
        return load_samples(src.path, src.width)
    raise TypeError(f"unknown source {src!r}")


def generate(config: RbgConfig = RbgConfig()) -> BitSequence:
    q = quantize(source_samples(config), config.adc_bits)
    n, m = config.derivative_order, config.lsb_count
    if q.size <= n:
        raise SeriesTooShort(f"{q.size} samples cannot feed a derivative of order {n}")
    usable = min(q.size - n, -(-config.output_bits // m))
    out_len = min(config.output_bits, usable * m)
    packed = np.empty((out_len + 7) // 8, dtype=np.uint8)
    # chunks of 8 samples' worth of bits stay byte aligned
    step = _CHUNK - _CHUNK % 8
    for lo in range(0, usable, step):
        hi = min(usable, lo + step)
        bits = lsb_bits(derivative(q[lo:hi + n], n), m)
        start = lo * m // 8
        chunk = np.packbits(bits)
        packed[start:start + chunk.size] = chunk[: packed.size - start]
    return BitSequence(packed, out_len)
