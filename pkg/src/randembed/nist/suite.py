"""Running the battery over partitioned blocks and aggregating the verdict.

A sub-statistic passes when the chi-square uniformity P-value of its
per-block p-values exceeds 0.0001 and the proportion of blocks with
``p >= alpha`` exceeds ``(1 - alpha) - 3 * sqrt(alpha * (1 - alpha) / n)``,
``n`` being the number of blocks the statistic applies to.  The suite passes
only when every sub-statistic of every test passes.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable, Sequence

import numpy as np

from ..bitio import BitSequence, BlockView, block_matrix
from ..errors import BlockLengthMismatch
from . import battery
from .special import igamc
from .templates import aperiodic_templates, template_string

UNIFORMITY_CUTOFF = 0.0001


class TestId(str, enum.Enum):
    FREQUENCY = "Frequency"
    BLOCK_FREQUENCY = "BlockFrequency"
    CUMULATIVE_SUMS = "CumulativeSums"
    RUNS = "Runs"
    LONGEST_RUN = "LongestRun"
    RANK = "Rank"
    FFT = "FFT"
    NON_OVERLAPPING_TEMPLATE = "NonOverlappingTemplate"
    OVERLAPPING_TEMPLATE = "OverlappingTemplate"
    UNIVERSAL = "Universal"
    APPROXIMATE_ENTROPY = "ApproximateEntropy"
    RANDOM_EXCURSIONS = "RandomExcursions"
    RANDOM_EXCURSIONS_VARIANT = "RandomExcursionsVariant"
    SERIAL = "Serial"
    LINEAR_COMPLEXITY = "LinearComplexity"

    __test__ = False  # keep pytest from collecting this enum

    @property
    def title(self) -> str:
        return _TITLES[self]


_TITLES = {
    TestId.FREQUENCY: "Frequency",
    TestId.BLOCK_FREQUENCY: "Block Frequency",
    TestId.CUMULATIVE_SUMS: "Cumulative Sums",
    TestId.RUNS: "Runs",
    TestId.LONGEST_RUN: "Longest Run",
    TestId.RANK: "Rank",
    TestId.FFT: "FFT",
    TestId.NON_OVERLAPPING_TEMPLATE: "Non-overlapping Template",
    TestId.OVERLAPPING_TEMPLATE: "Overlapping Template",
    TestId.UNIVERSAL: "Universal",
    TestId.APPROXIMATE_ENTROPY: "Approximate Entropy",
    TestId.RANDOM_EXCURSIONS: "Random Excursions",
    TestId.RANDOM_EXCURSIONS_VARIANT: "Random Excursions Variant",
    TestId.SERIAL: "Serial",
    TestId.LINEAR_COMPLEXITY: "Linear Complexity",
}

ALL_TESTS: tuple[TestId, ...] = tuple(TestId)


@dataclass(frozen=True)
class SuiteConfig:
    alpha: float = 0.01
    block_len: int = 1_000_000
    uniformity_bins: int = 10
    block_frequency_m: int = 128
    longest_run_m: int | None = 10_000
    rank_rows: int = 32
    rank_cols: int = 32
    template_m: int = 9
    template_blocks: int = 8
    overlapping_m: int = 9
    overlapping_block: int = 1032
    universal_l: int | None = 7
    universal_q: int | None = 1280
    apen_m: int = 10
    serial_m: int = 16
    linear_complexity_m: int = 500
    excursion_min_cycles: int = 500
    tests: tuple[TestId, ...] = ALL_TESTS
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.block_len < 1:
            raise ValueError("block_len must be positive")
        object.__setattr__(self, "tests", tuple(TestId(t) for t in self.tests))

    @classmethod
    def for_block_len(cls, n: int, **overrides) -> SuiteConfig:
        """Parameters scaled down for blocks shorter than 10^6 bits."""
        log2n = int(math.floor(math.log2(n)))
        params: dict[str, Any] = dict(
            block_len=n,
            longest_run_m=battery.longest_run_block_size(n),
            universal_l=None,
            universal_q=None,
            apen_m=max(1, min(10, log2n - 6)),
            serial_m=max(2, min(16, log2n - 3)),
        )
        params.update(overrides)
        return cls(**params)

    def with_(self, **changes) -> SuiteConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["tests"] = [t.value for t in self.tests]
        d.pop("threads")
        return d


def sub_labels(test: TestId, config: SuiteConfig) -> list[str]:
    if test is TestId.CUMULATIVE_SUMS:
        return ["forward", "reverse"]
    if test is TestId.SERIAL:
        return ["p1", "p2"]
    if test is TestId.NON_OVERLAPPING_TEMPLATE:
        m = config.template_m
        return [template_string(t, m) for t in aperiodic_templates(m)]
    if test is TestId.RANDOM_EXCURSIONS:
        return [f"x={x:+d}" for x in battery.EXCURSION_STATES]
    if test is TestId.RANDOM_EXCURSIONS_VARIANT:
        return [f"x={x:+d}" for x in battery.VARIANT_STATES]
    return [""]


def excursion_cutoff(n: int, config: SuiteConfig) -> float:
    return max(0.005 * math.sqrt(n), config.excursion_min_cycles)


def evaluate_block(bits: np.ndarray, config: SuiteConfig) -> dict[TestId, list[float] | None]:
    """p-values of every configured test on one block (None = not applicable)."""
    bits = np.asarray(bits, dtype=np.uint8)
    out: dict[TestId, list[float] | None] = {}
    walk = None
    for test in config.tests:
        if test in (TestId.RANDOM_EXCURSIONS, TestId.RANDOM_EXCURSIONS_VARIANT):
            walk = walk or battery.random_walk(bits)
            if walk.cycles < excursion_cutoff(bits.size, config):
                out[test] = None
                continue
            fn = battery.random_excursions if test is TestId.RANDOM_EXCURSIONS else battery.random_excursions_variant
            out[test] = fn(bits, walk=walk).p_values
            continue
        out[test] = _single(test, bits, config)
    return out


def _single(test: TestId, bits: np.ndarray, c: SuiteConfig) -> list[float]:
    if test is TestId.FREQUENCY:
        return [battery.frequency(bits).p_value]
    if test is TestId.BLOCK_FREQUENCY:
        return [battery.block_frequency(bits, c.block_frequency_m).p_value]
    if test is TestId.CUMULATIVE_SUMS:
        return [battery.cumulative_sums(bits).p_value, battery.cumulative_sums(bits, reverse=True).p_value]
    if test is TestId.RUNS:
        return [battery.runs(bits).p_value]
    if test is TestId.LONGEST_RUN:
        return [battery.longest_run(bits, c.longest_run_m).p_value]
    if test is TestId.RANK:
        return [battery.binary_matrix_rank(bits, c.rank_rows, c.rank_cols).p_value]
    if test is TestId.FFT:
        return [battery.spectral(bits).p_value]
    if test is TestId.NON_OVERLAPPING_TEMPLATE:
        return battery.non_overlapping_template(bits, c.template_m, c.template_blocks).p_values
    if test is TestId.OVERLAPPING_TEMPLATE:
        return [battery.overlapping_template(bits, c.overlapping_m, c.overlapping_block).p_value]
    if test is TestId.UNIVERSAL:
        return [battery.universal(bits, c.universal_l, c.universal_q).p_value]
    if test is TestId.APPROXIMATE_ENTROPY:
        return [battery.approximate_entropy(bits, c.apen_m).p_value]
    if test is TestId.SERIAL:
        return battery.serial(bits, c.serial_m).p_values
    if test is TestId.LINEAR_COMPLEXITY:
        return [battery.linear_complexity(bits, c.linear_complexity_m).p_value]
    raise ValueError(f"unknown test {test}")


def run_test(block: BlockView | np.ndarray, test: TestId, config: SuiteConfig) -> list[float] | None:
    bits = block.bits() if isinstance(block, BlockView) else np.asarray(block, dtype=np.uint8)
    if bits.size != config.block_len:
        raise BlockLengthMismatch(f"block has {bits.size} bits, config expects {config.block_len}")
    return evaluate_block(bits, config.with_(tests=(TestId(test),)))[TestId(test)]


# -- aggregation -------------------------------------------------------------

def proportion_threshold(n_blocks: int, alpha: float) -> float:
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    return (1.0 - alpha) - 3.0 * math.sqrt(alpha * (1.0 - alpha) / n_blocks)


def uniformity_pvalue(p_values: Sequence[float] | np.ndarray, bins: int = 10) -> float:
    """Chi-square P-value of the p-value histogram against uniform on [0, 1]."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size < 1:
        raise ValueError("need at least one p-value")
    idx = np.minimum(np.floor(p * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    expected = p.size / bins
    chi2 = float(np.sum((counts - expected) ** 2) / expected)
    return float(igamc((bins - 1) / 2.0, chi2 / 2.0))


@dataclass
class TestOutcome:
    test: TestId
    sub: int
    label: str
    p_values: np.ndarray
    block_indices: np.ndarray
    applicable_count: int
    proportion: float | None
    uniformity_p: float | None
    threshold: float | None
    passed: bool
    failing_blocks: list[int]

    __test__ = False

    def to_dict(self, include_p_values: bool = False) -> dict[str, Any]:
        d = {
            "test": self.test.value,
            "sub": self.sub,
            "label": self.label,
            "proportion": self.proportion,
            "uniformity_p": self.uniformity_p,
            "threshold": self.threshold,
            "applicable": self.applicable_count,
            "pass": self.passed,
            "failing_blocks": self.failing_blocks,
        }
        if include_p_values:
            d["p_values"] = [float(x) for x in self.p_values]
            d["block_indices"] = [int(i) for i in self.block_indices]
        return d


def aggregate(test: TestId, sub: int, label: str, p_column: np.ndarray, block_ids: np.ndarray,
              config: SuiteConfig) -> TestOutcome:
    mask = ~np.isnan(p_column)
    p = p_column[mask]
    ids = block_ids[mask]
    n = int(p.size)
    if n == 0:
        return TestOutcome(test, sub, label, p, ids, 0, None, None, None, True, [])
    failing = ids[p < config.alpha]
    proportion = 1.0 - failing.size / n
    threshold = proportion_threshold(n, config.alpha)
    uni = uniformity_pvalue(p, config.uniformity_bins)
    passed = bool(uni > UNIFORMITY_CUTOFF and proportion > threshold)
    return TestOutcome(test, sub, label, p, ids, n, proportion, uni, threshold, passed,
                       [int(i) for i in failing])


@dataclass
class SuiteReport:
    config: SuiteConfig
    n_blocks: int
    block_ids: list[int]
    outcomes: list[TestOutcome]
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    @property
    def verdict(self) -> str:
        return "Success" if self.passed else "Failure"

    def outcomes_for(self, test: TestId) -> list[TestOutcome]:
        return [o for o in self.outcomes if o.test is TestId(test)]

    def failing_outcomes(self) -> list[TestOutcome]:
        return [o for o in self.outcomes if not o.passed]

    def test_passed(self, test: TestId) -> bool:
        return all(o.passed for o in self.outcomes_for(test))

    def row(self, test: TestId) -> TestOutcome:
        """The displayed sub-statistic of a test: lowest proportion, then lowest uniformity."""
        subs = [o for o in self.outcomes_for(test) if o.applicable_count]
        if not subs:
            return self.outcomes_for(test)[0]
        return min(subs, key=lambda o: (o.proportion, o.uniformity_p))

    def exclude(self, blocks: Iterable[int]) -> SuiteReport:
        """Re-aggregate as if ``blocks`` had not been tested."""
        drop = np.asarray(sorted(set(int(b) for b in blocks)), dtype=np.int64)
        ids = [b for b in self.block_ids if b not in set(drop.tolist())]
        outcomes = []
        for o in self.outcomes:
            keep = ~np.isin(o.block_indices, drop)
            outcomes.append(aggregate(o.test, o.sub, o.label, o.p_values[keep], o.block_indices[keep], self.config))
        meta = dict(self.meta, excluded_blocks=[int(b) for b in drop])
        return SuiteReport(self.config, len(ids), ids, outcomes, meta)

    def failing_blocks(self) -> list[int]:
        """Blocks scoring p < alpha on any failing sub-statistic."""
        blocks: set[int] = set()
        for o in self.failing_outcomes():
            blocks.update(o.failing_blocks)
        return sorted(blocks)

    def block_attribution(self) -> dict[int, list[str]]:
        """For every block, the tests on which it scored p < alpha."""
        out: dict[int, set[str]] = {}
        for o in self.outcomes:
            for b in o.failing_blocks:
                out.setdefault(b, set()).add(o.test.value)
        return {b: sorted(t) for b, t in sorted(out.items())}

    def to_dict(self, include_p_values: bool = False) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "n_blocks": self.n_blocks,
            "alpha": self.config.alpha,
            "block_len": self.config.block_len,
            "config": self.config.to_dict(),
            "collapse": "row = lowest-proportion sub-statistic; a test passes only if all sub-statistics pass",
            "rows": [
                {
                    "test": t.value,
                    "sub": self.row(t).sub,
                    "label": self.row(t).label,
                    "proportion": self.row(t).proportion,
                    "uniformity_p": self.row(t).uniformity_p,
                    "pass": self.test_passed(t),
                }
                for t in self.config.tests
            ],
            "tests": [o.to_dict(include_p_values) for o in self.outcomes],
            "failing_blocks": self.failing_blocks(),
            "block_ids": list(self.block_ids),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SuiteReport:
        cfg = dict(d.get("config", {}))
        cfg.setdefault("alpha", d.get("alpha", 0.01))
        cfg.setdefault("block_len", d.get("block_len", 1_000_000))
        config = SuiteConfig(**cfg)
        outcomes = []
        for t in d["tests"]:
            outcomes.append(TestOutcome(
                test=TestId(t["test"]), sub=t["sub"], label=t.get("label", ""),
                p_values=np.asarray(t.get("p_values", []), dtype=float),
                block_indices=np.asarray(t.get("block_indices", []), dtype=np.int64),
                applicable_count=t["applicable"], proportion=t["proportion"],
                uniformity_p=t["uniformity_p"], threshold=t.get("threshold"),
                passed=t["pass"], failing_blocks=list(t["failing_blocks"]),
            ))
        return cls(config, d["n_blocks"], list(d.get("block_ids", range(d["n_blocks"]))),
                   outcomes, dict(d.get("meta", {})))

    def to_text(self) -> str:
        lines = [f"{'Statistical test':<28}{'P value':>10}{'Proportion':>12}  Result"]
        for t in self.config.tests:
            o = self.row(t)
            if o.applicable_count == 0:
                lines.append(f"{t.title:<28}{'n/a':>10}{'n/a':>12}  n/a")
                continue
            flag = "ok" if self.test_passed(t) else "FAIL"
            lines.append(f"{t.title:<28}{o.uniformity_p:>10.4f}{o.proportion:>12.4f}  {flag}")
        lines.append(f"{'Result':<28}{self.verdict:>10}")
        lines.append(f"({self.n_blocks} blocks of {self.config.block_len} bits, alpha = {self.config.alpha}; "
                     f"threshold {proportion_threshold(self.n_blocks, self.config.alpha):.6f})")
        return "\n".join(lines)

    def to_csv_rows(self) -> list[list[Any]]:
        rows: list[list[Any]] = [["test", "sub", "label", "applicable", "proportion", "threshold",
                                  "uniformity_p", "pass", "failing_blocks"]]
        for o in self.outcomes:
            rows.append([o.test.value, o.sub, o.label, o.applicable_count, o.proportion, o.threshold,
                         o.uniformity_p, int(o.passed), " ".join(map(str, o.failing_blocks))])
        return rows


# -- driving the battery -------------------------------------------------------

def _as_block_matrix(blocks, config: SuiteConfig) -> np.ndarray:
    if isinstance(blocks, BitSequence):
        mat = block_matrix(blocks, config.block_len)
    elif isinstance(blocks, np.ndarray):
        mat = blocks if blocks.ndim == 2 else blocks.reshape(1, -1)
    else:
        views = list(blocks)
        for v in views:
            if v.length != config.block_len:
                raise BlockLengthMismatch(f"block {v.block_index} has {v.length} bits, expected {config.block_len}")
        mat = np.stack([v.bits() for v in views]) if views else np.zeros((0, config.block_len), np.uint8)
    if mat.shape[1] != config.block_len:
        raise BlockLengthMismatch(f"blocks have {mat.shape[1]} bits, config expects {config.block_len}")
    if mat.shape[0] < 1:
        raise ValueError("need at least one full block")
    return mat


def _evaluate_packed(args: tuple[bytes, int, SuiteConfig]) -> dict[TestId, list[float] | None]:
    packed, n, config = args
    bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8), count=n)
    return evaluate_block(bits, config)


def default_threads() -> int:
    env = os.environ.get("RANDEMBED_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def evaluate_blocks(mat: np.ndarray, config: SuiteConfig,
                    progress=None) -> list[dict[TestId, list[float] | None]]:
    threads = max(1, config.threads)
    if threads == 1 or mat.shape[0] == 1:
        results = []
        for i, row in enumerate(mat):
            results.append(evaluate_block(row, config))
            if progress:
                progress(i + 1, mat.shape[0])
        return results
    n = mat.shape[1]
    jobs = ((np.packbits(row).tobytes(), n, config) for row in mat)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        # map preserves block order, so aggregation is scheduling-independent
        return list(pool.map(_evaluate_packed, jobs, chunksize=4))


def run_suite(blocks: BitSequence | Iterable[BlockView] | np.ndarray, config: SuiteConfig | None = None,
              block_ids: Sequence[int] | None = None, progress=None) -> SuiteReport:
    config = config or SuiteConfig()
    mat = _as_block_matrix(blocks, config)
    n_blocks = mat.shape[0]
    ids = np.asarray(block_ids if block_ids is not None else range(n_blocks), dtype=np.int64)
    per_block = evaluate_blocks(mat, config, progress)
    outcomes: list[TestOutcome] = []
    for test in config.tests:
        labels = sub_labels(test, config)
        table = np.full((n_blocks, len(labels)), np.nan)
        for i, res in enumerate(per_block):
            if res[test] is not None:
                table[i] = res[test]
        for j, label in enumerate(labels):
            outcomes.append(aggregate(test, j, label, table[:, j], ids, config))
    return SuiteReport(config, n_blocks, [int(i) for i in ids], outcomes)
