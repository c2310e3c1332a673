"""Randomness strength by minimal embeddable K, and repair of failing sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence, Union

import numpy as np

from .bitio import MEGABIT, BitSequence, block_matrix
from .embed import EmbedKey, KeyLike, SegmentGeometry, embed_fixed, keygen
from .errors import InsufficientFreshBits, InvalidGeometry, InvalidSkipList, NoFailureAttribution
from .nist.suite import SuiteConfig, SuiteReport, run_suite

DEFAULT_GRID = (9, 10, 11, 13, 20, 23, 27, 36, 45, 54, 63, 72, 81, 90, 99, 108)

# the largest exclusion count reported is 42 of 1000 blocks; allow some slack
MAX_SKIP_FRACTION = 0.1

KeyFamily = Union[str, Callable[[int, int, int], EmbedKey]]


def default_grid(block_len: int = MEGABIT) -> list[int]:
    grid = [k for k in DEFAULT_GRID if k <= block_len]
    k = DEFAULT_GRID[-1] * 2
    while k <= block_len:
        grid.append(k)
        k *= 2
    return grid


def family_key(family: KeyFamily, K: int, G: int, trial: int, seed: int = 0) -> EmbedKey:
    if callable(family):
        return family(K, G, trial)
    if family == "scheme1":
        return EmbedKey.scheme1(K, G)
    if family == "random":
        return keygen(K, G, seed=[seed, K, trial])
    raise ValueError(f"unknown key family {family!r}")


# -- repair -------------------------------------------------------------------------

def attributed_blocks(report: SuiteReport) -> list[int]:
    """Blocks with p < alpha on any failing sub-statistic (union over sub-statistics)."""
    if report.passed:
        return []
    blocks = report.failing_blocks()
    if not blocks:
        raise NoFailureAttribution("the report fails but names no failing blocks")
    return blocks


def repair_skip(carrier: BitSequence, key: KeyLike, report: SuiteReport,
                block_len: int | None = None) -> tuple[BitSequence, list[int]]:
    """Re-embed into the carrier, leaving the attributed blocks untouched."""
    block_len = block_len or report.config.block_len
    skip = attributed_blocks(report)
    return embed_fixed(carrier, key, skip, block_len), skip


def certify(seq: BitSequence, config: SuiteConfig, skip: Iterable[int] = ()) -> SuiteReport:
    """Run the suite on every full block except the skipped ones."""
    mat = block_matrix(seq, config.block_len)
    skip_set = {int(s) for s in skip}
    if any(not 0 <= s < mat.shape[0] for s in skip_set):
        raise InvalidSkipList(f"skip indices must lie in [0, {mat.shape[0]})")
    keep = np.asarray([i for i in range(mat.shape[0]) if i not in skip_set], dtype=np.int64)
    report = run_suite(mat[keep], config, block_ids=keep)
    report.meta["excluded_blocks"] = sorted(skip_set)
    return report


def repair_replace(carrier: BitSequence, failing_blocks: Iterable[int], fresh: BitSequence,
                   block_len: int = MEGABIT) -> BitSequence:
    """Drop the failing blocks and append as many fresh blocks after the rest."""
    n_blocks = carrier.length // block_len
    failing = sorted({int(b) for b in failing_blocks})
    if failing and (failing[0] < 0 or failing[-1] >= n_blocks):
        raise InvalidSkipList(f"failing block indices must lie in [0, {n_blocks})")
    need = len(failing) * block_len
    if fresh.length < need:
        raise InsufficientFreshBits(f"need {need} fresh bits, got {fresh.length}")
    if not failing:
        return carrier
    bits = carrier.bits()
    blocks = bits[: n_blocks * block_len].reshape(n_blocks, block_len)
    kept = np.delete(blocks, failing, axis=0).reshape(-1)
    tail = bits[n_blocks * block_len:]
    # the tail stays last so blocks keep their alignment
    return BitSequence.from_bits(np.concatenate([kept, fresh.bits()[:need], tail]))


# -- strength sweep -----------------------------------------------------------------

@dataclass
class GridPoint:
    K: int
    trial: int
    passed: bool
    clean: bool
    removed_blocks: int
    failing_tests: list[str]
    key_mask: tuple[int, ...] = ()

    @property
    def verdict(self) -> str:
        return "S" if self.passed else "F"

    def to_dict(self) -> dict[str, Any]:
        return {
            "K": self.K,
            "trial": self.trial,
            "verdict": self.verdict,
            "clean": self.clean,
            "removed_blocks": self.removed_blocks,
            "failing_tests": self.failing_tests,
        }


@dataclass
class StrengthReport:
    G: int
    grid: list[GridPoint]
    level: float = 0.5
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def Ks(self) -> list[int]:
        return sorted({p.K for p in self.grid})

    def pass_probability(self, K: int, clean: bool = False) -> float:
        pts = [p for p in self.grid if p.K == K]
        if not pts:
            raise KeyError(K)
        ok = [p.clean if clean else p.passed for p in pts]
        return sum(ok) / len(ok)

    @property
    def minimal_passing_K(self) -> int | None:
        """Smallest K whose pass-with-repair probability reaches ``level``."""
        for K in self.Ks:
            if self.pass_probability(K) >= self.level and self.pass_probability(K) > 0:
                return K
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "G": self.G,
            "level": self.level,
            "minimal_passing_K": self.minimal_passing_K,
            "pass_probability": {str(K): self.pass_probability(K) for K in self.Ks},
            "clean_pass_probability": {str(K): self.pass_probability(K, clean=True) for K in self.Ks},
            "grid": [p.to_dict() for p in self.grid],
            "meta": self.meta,
        }

    def removed(self, K: int) -> int:
        """Most blocks removed in a passing trial at K (0 if none passed)."""
        return max((p.removed_blocks for p in self.grid if p.K == K and p.passed), default=0)

    def to_text(self) -> str:
        Ks = self.Ks
        verdicts = ["S" if self.pass_probability(K) >= self.level else "F" for K in Ks]
        lines = ["K       " + "".join(f"{K:>6}" for K in Ks),
                 "Result  " + "".join(f"{v:>6}" for v in verdicts),
                 "P(pass) " + "".join(f"{self.pass_probability(K):>6.2f}" for K in Ks),
                 "Removed " + "".join(f"{self.removed(K):>6}" for K in Ks),
                 f"minimal passing K: {self.minimal_passing_K}"]
        return "\n".join(lines)


def evaluate_point(seq: BitSequence, key: EmbedKey, config: SuiteConfig, trial: int = 0,
                   max_skip_fraction: float = MAX_SKIP_FRACTION) -> GridPoint:
    embedded = embed_fixed(seq, key, (), config.block_len)
    report = run_suite(embedded, config)
    if report.passed:
        return GridPoint(key.K, trial, True, True, 0, [], key.mask)
    failing_tests = sorted({o.test.value for o in report.failing_outcomes()})
    skip = report.failing_blocks()
    if not skip or len(skip) > max_skip_fraction * report.n_blocks or len(skip) >= report.n_blocks:
        return GridPoint(key.K, trial, False, False, len(skip), failing_tests, key.mask)
    # embedding is block-local, so skipped blocks only drop out of the test
    repaired = report.exclude(skip)
    return GridPoint(key.K, trial, repaired.passed, False, len(skip), failing_tests, key.mask)


def strength_sweep(seq: BitSequence, K_grid: Sequence[int] | None = None, G: int = 5,
                   key_family: KeyFamily = "scheme1", suite_config: SuiteConfig | None = None,
                   trials: int = 1, seed: int = 0, level: float = 0.5,
                   max_skip_fraction: float = MAX_SKIP_FRACTION, progress=None) -> StrengthReport:
    config = suite_config or SuiteConfig()
    grid = sorted(set(K_grid if K_grid is not None else default_grid(config.block_len)))
    for K in grid:
        SegmentGeometry(K, G)
        if K > config.block_len:
            raise InvalidGeometry(f"K = {K} exceeds the block length {config.block_len}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    points = []
    for K in grid:
        for t in range(trials):
            key = family_key(key_family, K, G, t, seed)
            points.append(evaluate_point(seq, key, config, t, max_skip_fraction))
            if progress:
                progress(points[-1])
    meta = {"seed": seed, "trials": trials, "key_family": key_family if isinstance(key_family, str) else "custom",
            "block_len": config.block_len, "n_blocks": seq.length // config.block_len,
            "max_skip_fraction": max_skip_fraction}
    return StrengthReport(G, points, level, meta)
