"""Coverage, efficiency, and adaptiveness metrics for prediction sets.

Coverage is the fraction of instances whose true label landed in the
predicted set; efficiency is average set size and the ratio of singleton
sets; adaptiveness is judged by stratifying coverage over set-size bins
and reporting the worst per-bin deviation from the nominal level
(the size-stratified coverage violation of Angelopoulos et al., 2021).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conformal import PredictionSet
from .errors import EmptyRun, InvalidInput

__all__ = [
    "BinStat",
    "EvaluationRun",
    "MetricsReport",
    "SizeBins",
    "avg_set_size",
    "compute_report",
    "empirical_coverage",
    "singleton_stats",
    "size_stratified_coverage",
    "sscv",
]


@dataclass(frozen=True)
class SizeBins:
    """Disjoint, ordered, inclusive integer ranges over set sizes."""

    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        edges = tuple((int(lo), int(hi)) for lo, hi in self.edges)
        if not edges:
            raise InvalidInput("need at least one bin")
        if edges[0][0] != 0:
            raise InvalidInput("bins must start at size 0")
        for i, (lo, hi) in enumerate(edges):
            if lo > hi:
                raise InvalidInput(f"bin {i} has lo > hi")
            if i and lo != edges[i - 1][1] + 1:
                raise InvalidInput("bins must be contiguous and ordered")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def default(cls, num_classes: int) -> "SizeBins":
        """The canonical 0-1 / 2-3 / 4-6 / 7-10 / 11-K binning.

        Bins beyond the class count are dropped and the last edge is
        clamped to K, so the ranges always cover {0..K} exactly.
        """
        canonical = [(0, 1), (2, 3), (4, 6), (7, 10), (11, num_classes)]
        edges = [
            (lo, min(hi, num_classes)) for lo, hi in canonical if lo <= num_classes
        ]
        return cls(tuple(edges))

    def index_of(self, size: int) -> int:
        for i, (lo, hi) in enumerate(self.edges):
            if lo <= size <= hi:
                return i
        raise InvalidInput(f"set size {size} not covered by bins {self.edges}")


@dataclass(frozen=True)
class EvaluationRun:
    """Prediction sets with true labels for one (method, alpha) evaluation."""

    sets: tuple[PredictionSet, ...]
    labels: np.ndarray
    alpha: float
    method_name: str = ""

    def __post_init__(self):
        sets = tuple(self.sets)
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (len(sets),):
            raise InvalidInput("labels must match the number of prediction sets")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInput("alpha must lie in (0, 1)")
        object.__setattr__(self, "sets", sets)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.sets)

    def covered(self) -> np.ndarray:
        return np.fromiter(
            (int(lab) in s for s, lab in zip(self.sets, self.labels)),
            dtype=bool,
            count=self.n,
        )

    def sizes(self) -> np.ndarray:
        return np.fromiter((s.size for s in self.sets), dtype=np.int64, count=self.n)


def _require_nonempty(run: EvaluationRun):
    if run.n == 0:
        raise EmptyRun("no prediction sets to evaluate")


def empirical_coverage(run: EvaluationRun) -> float:
    """Fraction of instances whose true label is in the predicted set."""
    _require_nonempty(run)
    return float(run.covered().mean())


def avg_set_size(run: EvaluationRun) -> float:
    """Mean number of labels per prediction set."""
    _require_nonempty(run)
    return float(run.sizes().mean())


def singleton_stats(run: EvaluationRun) -> tuple[float, Optional[float]]:
    """Ratio of singleton sets and the coverage restricted to them.

    The restricted coverage is None when no singletons were predicted.
    """
    _require_nonempty(run)
    single = run.sizes() == 1
    ratio = float(single.mean())
    if not single.any():
        return ratio, None
    return ratio, float(run.covered()[single].mean())


@dataclass(frozen=True)
class BinStat:
    """Instance count and coverage within one size bin (None when empty)."""

    lo: int
    hi: int
    n: int
    coverage: Optional[float]


def size_stratified_coverage(run: EvaluationRun, bins: SizeBins) -> list[BinStat]:
    """Per-bin instance counts and coverages, empty bins reported as None."""
    _require_nonempty(run)
    sizes = run.sizes()
    covered = run.covered()
    assignment = np.fromiter(
        (bins.index_of(int(s)) for s in sizes), dtype=np.int64, count=run.n
    )
    stats = []
    for i, (lo, hi) in enumerate(bins.edges):
        in_bin = assignment == i
        count = int(in_bin.sum())
        cov = float(covered[in_bin].mean()) if count else None
        stats.append(BinStat(lo=lo, hi=hi, n=count, coverage=cov))
    return stats


def sscv(run: EvaluationRun, bins: SizeBins) -> float:
    """Worst deviation of any nonempty bin's coverage from 1 - alpha."""
    stats = size_stratified_coverage(run, bins)
    deviations = [
        abs(s.coverage - (1.0 - run.alpha)) for s in stats if s.coverage is not None
    ]
    return max(deviations)


@dataclass(frozen=True)
class MetricsReport:
    """All metrics for one (method, alpha) run.

    ``singleton_coverage`` is absent (None) when no singleton sets were
    predicted.
    """

    coverage: float
    avg_set_size: float
    singleton_ratio: float
    singleton_coverage: Optional[float]
    stratified: tuple[BinStat, ...]
    sscv: Optional[float]

    def to_json_dict(self) -> dict:
        doc = {
            "coverage": self.coverage,
            "avg_set_size": self.avg_set_size,
            "singleton_ratio": self.singleton_ratio,
            "stratified": [
                {"lo": s.lo, "hi": s.hi, "n": s.n, "coverage": s.coverage}
                for s in self.stratified
            ],
        }
        if self.singleton_coverage is not None:
            doc["singleton_coverage"] = self.singleton_coverage
        if self.sscv is not None:
            doc["sscv"] = self.sscv
        return doc

    def metric_items(self) -> list[tuple[str, float]]:
        """Flat (metric, value) pairs for plot data; absent metrics omitted."""
        items = [
            ("avg_set_size", self.avg_set_size),
            ("coverage", self.coverage),
            ("singleton_ratio", self.singleton_ratio),
        ]
        if self.singleton_coverage is not None:
            items.append(("singleton_coverage", self.singleton_coverage))
        if self.sscv is not None:
            items.append(("sscv", self.sscv))
        return sorted(items)


def compute_report(run: EvaluationRun, bins: SizeBins) -> MetricsReport:
    """Evaluate every metric over one run."""
    ratio, singleton_cov = singleton_stats(run)
    return MetricsReport(
        coverage=empirical_coverage(run),
        avg_set_size=avg_set_size(run),
        singleton_ratio=ratio,
        singleton_coverage=singleton_cov,
        stratified=tuple(size_stratified_coverage(run, bins)),
        sscv=sscv(run, bins),
    )
