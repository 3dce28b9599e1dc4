"""Experiment driver: logits ingestion, seeded multi-split runs, reports.

The driver reproduces the usual evaluation protocol for conformal
classifiers on pre-exported model outputs: split the pooled data into
calibration and test parts with a seeded shuffle, calibrate every
configured method at every confidence level, evaluate on the test part,
and repeat over several seeded splits.  Everything downstream of the
input file and the configuration is deterministic, including the bytes
of the emitted report and plot data.

Input format: UTF-8 CSV with header ``label,z0,...,z{K-1}``, one instance
per row, label first, then the raw (untransformed) label scores.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .conformal import LabeledLogitDataset, calibrate, predict_sets
from .errors import (
    InconsistentWidth,
    InvalidInput,
    IoError,
    LabelOutOfRange,
    ParseError,
)
from .metrics import EvaluationRun, MetricsReport, SizeBins, compute_report
from .scores import RapsParams, ScoreKind
from .tuning import (
    DEFAULT_GAMMA_GRID,
    DEFAULT_K_GRID,
    DEFAULT_LAMBDA_GRID,
    SplitSpec,
    TuningResult,
    split,
    tune_gamma,
    tune_raps,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "MethodSpec",
    "emit_plot_data",
    "load_dataset",
    "report_json",
    "run_experiment",
    "run_sweep",
    "write_report",
]


def load_dataset(path: str) -> LabeledLogitDataset:
    """Parse a ``label,z0,...,z{K-1}`` CSV into a dataset.

    Row order is preserved.  Malformed rows raise with their 1-based line
    number; a header-only file yields an empty dataset (calibration will
    refuse it downstream).
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: missing header", line=1) from None
        expected = ["label"] + [f"z{i}" for i in range(len(header) - 1)]
        if len(header) < 3 or [h.strip() for h in header] != expected:
            raise ParseError(
                f"header must be label,z0,...,z{{K-1}} with K >= 2, got {header!r}",
                line=1,
            )
        k = len(header) - 1
        labels: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != k + 1:
                raise InconsistentWidth(
                    f"expected {k + 1} fields, got {len(row)}", line=lineno
                )
            try:
                label = int(row[0])
            except ValueError:
                raise ParseError(f"bad label {row[0]!r}", line=lineno) from None
            if not 0 <= label < k:
                raise LabelOutOfRange(
                    f"line {lineno}: label {label} outside [0, {k})"
                )
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise ParseError(f"bad score value in {row[1:]!r}", line=lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite score value", line=lineno)
            labels.append(label)
            rows.append(values)
    logits = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, k))
    return LabeledLogitDataset(logits, np.asarray(labels, dtype=np.int64))


@dataclass(frozen=True)
class MethodSpec:
    """One conformal method to run: a score kind, optionally grid-tuned."""

    score: str
    name: str = ""
    gamma: Optional[float] = None
    lambda_reg: Optional[float] = None
    k_reg: Optional[int] = None
    randomized: bool = False
    rng_seed: int = 0
    tune: bool = False
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    k_grid: tuple[int, ...] = DEFAULT_K_GRID

    def __post_init__(self):
        if self.score not in ("sparsemax", "entmax", "log_margin", "inv_prob", "raps"):
            raise InvalidInput(f"unknown score {self.score!r}")
        if self.tune and self.score not in ("entmax", "raps"):
            raise InvalidInput(f"{self.score} has nothing to tune")
        if not self.tune:
            self.fixed_kind()  # validate eagerly
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self) -> str:
        if self.score == "entmax":
            return "opt-entmax" if self.tune else f"{self.gamma:g}-entmax"
        return {
            "sparsemax": "sparsemax",
            "log_margin": "log-margin",
            "inv_prob": "inv-prob",
            "raps": "raps",
        }[self.score]

    def fixed_kind(self) -> ScoreKind:
        """The score kind for an untuned method."""
        if self.score == "entmax":
            if self.gamma is None:
                raise InvalidInput("entmax method needs a gamma (or tune: true)")
            return ScoreKind.entmax(self.gamma)
        if self.score == "raps":
            if self.lambda_reg is None or self.k_reg is None:
                raise InvalidInput(
                    "raps method needs lambda_reg and k_reg (or tune: true)"
                )
            return ScoreKind.raps(
                RapsParams(
                    lambda_reg=self.lambda_reg,
                    k_reg=self.k_reg,
                    randomized=self.randomized,
                    rng_seed=self.rng_seed,
                )
            )
        return ScoreKind(self.score)

    @classmethod
    def from_dict(cls, doc: dict) -> "MethodSpec":
        known = {
            "score", "name", "gamma", "lambda_reg", "k_reg", "randomized",
            "rng_seed", "tune", "gamma_grid", "lambda_grid", "k_grid",
        }
        unknown = set(doc) - known
        if unknown:
            raise InvalidInput(f"unknown method fields: {sorted(unknown)}")
        if "score" not in doc:
            raise InvalidInput("method entry is missing 'score'")
        kwargs = dict(doc)
        for grid_key in ("gamma_grid", "lambda_grid", "k_grid"):
            if grid_key in kwargs:
                kwargs[grid_key] = tuple(kwargs[grid_key])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        doc: dict = {"score": self.score, "name": self.name}
        if self.score == "entmax" and not self.tune:
            doc["gamma"] = self.gamma
        if self.score == "raps" and not self.tune:
            doc.update(
                lambda_reg=self.lambda_reg,
                k_reg=self.k_reg,
                randomized=self.randomized,
                rng_seed=self.rng_seed,
            )
        if self.tune:
            doc["tune"] = True
            if self.score == "entmax":
                doc["gamma_grid"] = list(self.gamma_grid)
            else:
                doc["lambda_grid"] = list(self.lambda_grid)
                doc["k_grid"] = list(self.k_grid)
        return doc


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a sweep needs; mirrors the JSON config field for field."""

    input_path: str
    methods: tuple[MethodSpec, ...]
    alphas: tuple[float, ...]
    n_splits: int = 5
    cal_fraction: float = 0.4
    base_seed: int = 0
    bins: Optional[SizeBins] = None
    output_path: str = "."

    def __post_init__(self):
        if not self.methods:
            raise InvalidInput("config needs at least one method")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise InvalidInput(f"duplicate method names: {names}")
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            raise InvalidInput("config needs at least one alpha")
        if any(not 0.0 < a < 1.0 for a in alphas):
            raise InvalidInput("every alpha must lie in (0, 1)")
        if list(alphas) != sorted(alphas):
            raise InvalidInput("alphas must be sorted ascending")
        object.__setattr__(self, "alphas", alphas)
        if self.n_splits < 1:
            raise InvalidInput("n_splits must be at least 1")
        if not 0.0 < self.cal_fraction < 1.0:
            raise InvalidInput("cal_fraction must lie in (0, 1)")
        if self.base_seed < 0:
            raise InvalidInput("base_seed must be nonnegative")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {
            "input_path", "methods", "alphas", "n_splits", "cal_fraction",
            "base_seed", "bins", "output_path",
        }
        unknown = set(doc) - known
        if unknown:
            raise InvalidInput(f"unknown config fields: {sorted(unknown)}")
        for required in ("input_path", "methods", "alphas"):
            if required not in doc:
                raise InvalidInput(f"config is missing '{required}'")
        kwargs = dict(doc)
        kwargs["methods"] = tuple(MethodSpec.from_dict(m) for m in doc["methods"])
        kwargs["alphas"] = tuple(doc["alphas"])
        if doc.get("bins") is not None:
            kwargs["bins"] = SizeBins(tuple((lo, hi) for lo, hi in doc["bins"]))
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ParseError(f"cannot open {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON in {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ParseError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = {
            "input_path": self.input_path,
            "methods": [m.to_dict() for m in self.methods],
            "alphas": list(self.alphas),
            "n_splits": self.n_splits,
            "cal_fraction": self.cal_fraction,
            "base_seed": self.base_seed,
            "output_path": self.output_path,
        }
        if self.bins is not None:
            doc["bins"] = [list(edge) for edge in self.bins.edges]
        return doc


@dataclass(frozen=True)
class Cell:
    """Results of one (method, alpha, split) evaluation."""

    report: MetricsReport
    tuning: Optional[TuningResult] = None


@dataclass(frozen=True)
class ExperimentReport:
    """Per-split metrics plus across-split aggregates and provenance."""

    config: dict
    split_seeds: tuple[int, ...]
    cells: dict  # method name -> alpha -> list[Cell], splits in order
    method_names: tuple[str, ...]
    alphas: tuple[float, ...]

    def aggregates(self) -> dict:
        """Mean and sample std of each metric over splits.

        Metrics absent in some split (singleton coverage with no
        singletons) are aggregated only when present in every split.  The
        std is None for a single split.
        """
        out: dict = {}
        n = len(self.split_seeds)
        for method in self.method_names:
            out[method] = {}
            for alpha in self.alphas:
                per_metric: dict = {}
                rows = [cell.report.metric_items() for cell in self.cells[method][alpha]]
                common = set.intersection(*(set(dict(r)) for r in rows))
                for metric in sorted(common):
                    values = [dict(r)[metric] for r in rows]
                    per_metric[metric] = {
                        "mean": float(np.mean(values)),
                        "std": float(np.std(values, ddof=1)) if n > 1 else None,
                    }
                out[method][_alpha_key(alpha)] = per_metric
        return out

    def to_json_dict(self) -> dict:
        per_split: dict = {}
        for method in self.method_names:
            per_split[method] = {}
            for alpha in self.alphas:
                entries = []
                for s, cell in enumerate(self.cells[method][alpha]):
                    entry = dict(cell.report.to_json_dict())
                    entry["split"] = s
                    if cell.tuning is not None:
                        entry["tuning"] = {
                            "chosen": cell.tuning.to_json_dict()["chosen"],
                            "objective": cell.tuning.objective,
                        }
                    entries.append(entry)
                per_split[method][_alpha_key(alpha)] = entries
        return {
            "provenance": {
                "config": self.config,
                "split_seeds": list(self.split_seeds),
            },
            "per_split": per_split,
            "aggregates": self.aggregates(),
        }


def _alpha_key(alpha: float) -> str:
    return repr(float(alpha))


def _resolve_cell(cal, method: MethodSpec, alpha: float, seed: int):
    """Calibrate one method on the calibration part, tuning first if asked.

    Tuned methods re-split the calibration part 60/40, choose the
    parameter on the tuning 40%, and the final predictor is calibrated on
    the 60% part only; keeping the tuning data out preserves
    exchangeability with the test part.
    """
    if not method.tune:
        return calibrate(cal, method.fixed_kind(), alpha), None
    tune_spec = SplitSpec((0.6, 0.4), seed=seed)
    if method.score == "entmax":
        result = tune_gamma(cal, alpha, method.gamma_grid, tune_spec)
        kind = ScoreKind.entmax(result.chosen)
    else:
        result = tune_raps(cal, alpha, method.lambda_grid, method.k_grid, tune_spec)
        lam, k = result.chosen
        kind = ScoreKind.raps(RapsParams(lambda_reg=lam, k_reg=int(k)))
    cal_part = split(cal, tune_spec)[0]
    return calibrate(cal_part, kind, alpha), result


def run_experiment(
    cfg: ExperimentConfig, data: Optional[LabeledLogitDataset] = None
) -> ExperimentReport:
    """Run every (method, alpha) over ``n_splits`` seeded splits.

    Split ``s`` uses seed ``base_seed + s`` for its calibration/test
    shuffle (and for any tuning sub-split).  ``data`` overrides loading
    from ``cfg.input_path``, for callers that already hold the dataset.
    """
    if data is None:
        data = load_dataset(cfg.input_path)
    bins = cfg.bins if cfg.bins is not None else SizeBins.default(data.num_classes)
    seeds = tuple(cfg.base_seed + s for s in range(cfg.n_splits))
    cells: dict = {m.name: {alpha: [] for alpha in cfg.alphas} for m in cfg.methods}
    for seed in seeds:
        spec = SplitSpec((cfg.cal_fraction, 1.0 - cfg.cal_fraction), seed=seed)
        cal, test = split(data, spec)
        for method in cfg.methods:
            for alpha in cfg.alphas:
                pred, tuning = _resolve_cell(cal, method, alpha, seed)
                sets = predict_sets(test.logits, pred)
                run = EvaluationRun(
                    sets=tuple(sets),
                    labels=test.labels,
                    alpha=alpha,
                    method_name=method.name,
                )
                cells[method.name][alpha].append(
                    Cell(report=compute_report(run, bins), tuning=tuning)
                )
    return ExperimentReport(
        config=cfg.to_dict(),
        split_seeds=seeds,
        cells=cells,
        method_names=tuple(m.name for m in cfg.methods),
        alphas=cfg.alphas,
    )


def report_json(report: ExperimentReport) -> str:
    """Canonical JSON text for a report; identical runs give identical bytes."""
    return json.dumps(report.to_json_dict(), sort_keys=True, indent=2) + "\n"


def write_report(report: ExperimentReport, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report_json(report))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def emit_plot_data(report: ExperimentReport, path: str) -> None:
    """Long-format CSV: method, alpha, split, metric, value.

    Rows are sorted by (method, alpha, split, metric); reals are fixed
    6-decimal; metrics absent from a split (singleton coverage with no
    singletons) are omitted.
    """
    rows = []
    for method in sorted(report.method_names):
        for alpha in report.alphas:
            for s, cell in enumerate(report.cells[method][alpha]):
                for metric, value in cell.report.metric_items():
                    rows.append((method, f"{alpha:.6f}", s, metric, f"{value:.6f}"))
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "alpha", "split", "metric", "value"])
            writer.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def run_sweep(cfg: ExperimentConfig, out_dir: str) -> tuple[str, str]:
    """Full experiment: write ``report.json`` and ``plotdata.csv``."""
    report = run_experiment(cfg)
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    report_path = os.path.join(out_dir, "report.json")
    plot_path = os.path.join(out_dir, "plotdata.csv")
    write_report(report, report_path)
    emit_plot_data(report, plot_path)
    return report_path, plot_path
