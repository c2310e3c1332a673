"""Figures for suite and strength reports, rendered to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analyze import StrengthReport  # noqa: E402
from .nist.suite import SuiteReport, proportion_threshold  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def pvalue_histograms(report: SuiteReport, path: str | Path) -> Path:
    """One histogram of the displayed sub-statistic's p-values per test."""
    tests = list(report.config.tests)
    cols = 5
    rows = -(-len(tests) // cols)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(rows, cols, figsize=(10, 2.0 * rows), squeeze=False)
        for ax, test in zip(axes.flat, tests):
            o = report.row(test)
            bins = report.config.uniformity_bins
            if o.p_values.size:
                ax.hist(o.p_values, bins=bins, range=(0, 1), color="0.55", edgecolor="white")
                ax.axhline(o.p_values.size / bins, color="k", lw=0.8, ls="--")
            title = test.title if not o.label else f"{test.title} [{o.label}]"
            ax.set_title(title, fontsize=7)
            ax.set_xlim(0, 1)
        for ax in list(axes.flat)[len(tests):]:
            ax.axis("off")
        fig.suptitle(f"p-value histograms, {report.n_blocks} blocks, verdict {report.verdict}")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path


def proportions(report: SuiteReport, path: str | Path) -> Path:
    """Proportion of passing blocks per sub-statistic against its threshold."""
    applicable = [o for o in report.outcomes if o.applicable_count]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(10, 3.2))
        x = np.arange(len(applicable))
        prop = np.array([o.proportion for o in applicable])
        thr = np.array([o.threshold for o in applicable])
        ok = np.array([o.passed for o in applicable])
        ax.scatter(x[ok], prop[ok], s=6, color="0.3", label="pass")
        ax.scatter(x[~ok], prop[~ok], s=14, color="tab:red", marker="x", label="fail")
        ax.step(x, thr, where="mid", color="k", lw=0.8, label="threshold")
        ax.axhline(1 - report.config.alpha, color="0.6", lw=0.6, ls=":")
        # tick each test at the first of its sub-statistics
        starts, names = [], []
        for i, o in enumerate(applicable):
            if o.sub == 0:
                starts.append(i)
                names.append(o.test.value)
        ax.set_xticks(starts)
        ax.set_xticklabels(names, rotation=60, ha="right")
        ax.set_ylabel("proportion")
        lo = min(prop.min() if prop.size else 1.0, proportion_threshold(max(1, report.n_blocks), report.config.alpha))
        ax.set_ylim(max(0.0, lo - 0.02), 1.005)
        ax.legend(loc="lower left", fontsize=7, frameon=False)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path


def strength_curve(report: StrengthReport, path: str | Path) -> Path:
    Ks = report.Ks
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(Ks, [report.pass_probability(K) for K in Ks], "o-", color="k", ms=3, label="with repair")
        ax.plot(Ks, [report.pass_probability(K, clean=True) for K in Ks], "s--", color="0.5", ms=3, label="clean")
        if report.minimal_passing_K is not None:
            ax.axvline(report.minimal_passing_K, color="tab:red", lw=0.8, ls=":")
        ax.set_xscale("log")
        ax.set_xlabel("K")
        ax.set_ylabel("pass probability")
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"G = {report.G}")
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path


def suite_figures(report: SuiteReport, directory: str | Path, stem: str = "suite") -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    return [pvalue_histograms(report, d / f"{stem}_pvalues.png"),
            proportions(report, d / f"{stem}_proportions.png")]
