"""Benchmarks, failure identification and report emission.

Aggregates are percentages (0-100) of per-frame sub-scores, matching the way
driving benchmarks usually tabulate them. Failure labels always come from the
base planner: a frame is a failure when the base planner's pick scores a PDMS
of exactly zero under the expert.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .deploy import RECORD_FIELDS, DeploymentConfig, DeploymentRecord, FallbackSet, run_deployment
from .errors import EmptyStreamError, InvalidParameterError, ShapeMismatchError
from .geometry import PlanningVocabulary
from .scorer import ScoringPlanner, expert_argmax
from .worldsim import ALL_CATEGORIES, CATEGORIES, NONE_CATEGORY, Scene, expert_table, pdm_scores

METRICS = ("nc", "dac", "ep", "c", "ttc", "pdms")
DEFAULT_THRESHOLDS = (0.2, 0.5, 0.8, 1.1, 1.4)
REPORT_FORMATS = ("csv", "json", "markdown")


def expert_tables(stream: Sequence[Scene], vocab: PlanningVocabulary, jobs: int = 1) -> dict:
    """frame_index -> (k, 5) expert table; each table is independent, so threads don't change values."""
    stream = list(stream)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            tables = list(pool.map(lambda s: expert_table(s, vocab), stream))
    else:
        tables = [expert_table(s, vocab) for s in stream]
    return {s.frame_index: t for s, t in zip(stream, tables)}


def _percent_means(rows: np.ndarray) -> dict:
    return {m: float(100.0 * np.mean(rows[:, i])) for i, m in enumerate(METRICS)}


def _record_matrix(records) -> np.ndarray:
    return np.array([[getattr(r, m) for m in METRICS] for r in records], dtype=np.float64)


@dataclass(frozen=True)
class BenchmarkResult:
    strategy: str
    measure: str
    records: tuple
    overall: dict
    per_category: dict
    human: dict | None = None

    @property
    def n_frames(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "measure": self.measure,
            "records": [asdict(r) for r in self.records],
            "overall": self.overall,
            "per_category": self.per_category,
            "human": self.human,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkResult":
        return cls(
            d["strategy"], d["measure"], tuple(DeploymentRecord(**r) for r in d["records"]),
            d["overall"], d["per_category"], d.get("human"),
        )


def summarize(records: Sequence[DeploymentRecord], human_rows=None, strategy=None, measure=None) -> BenchmarkResult:
    records = tuple(records)
    if not records:
        raise EmptyStreamError("no deployment records to summarize")
    mat = _record_matrix(records)
    cats = np.array([r.category if r.category in ALL_CATEGORIES else NONE_CATEGORY for r in records])
    per_cat = {c: _percent_means(mat[cats == c]) | {"n": int(np.sum(cats == c))} for c in ALL_CATEGORIES if np.any(cats == c)}
    human = None
    if human_rows is not None:
        h = np.asarray(human_rows, dtype=np.float64)
        human = _percent_means(np.column_stack([h, pdm_scores(h)]))
    return BenchmarkResult(
        strategy or records[0].strategy, measure or records[0].measure, records, _percent_means(mat), per_cat, human
    )


def evaluate(
    stream: Sequence[Scene],
    planner: ScoringPlanner,
    config: DeploymentConfig,
    jobs: int = 1,
    tables: dict | None = None,
    fallback: FallbackSet | None = None,
) -> BenchmarkResult:
    """Deploy ``config`` over ``stream`` and aggregate, with an expert-argmax oracle row."""
    stream = list(stream)
    if not stream:
        raise EmptyStreamError("empty stream")
    tables = tables if tables is not None else expert_tables(stream, planner.vocab, jobs)
    records = run_deployment(stream, planner, config, tables, fallback=fallback, jobs=jobs)
    human = [tables[s.frame_index][expert_argmax(tables[s.frame_index])] for s in stream]
    return summarize(records, human, config.strategy, config.measure)


# ---------------------------------------------------------------------------
# failure identification


@dataclass(frozen=True)
class FailureClassification:
    threshold: float
    tpr: float
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    select_all_accuracy: float
    select_none_accuracy: float

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def failure_rate(self) -> float:
        return (self.tp + self.fn) / self.n


def classify_failures(records: Sequence[DeploymentRecord], threshold: float) -> FailureClassification:
    """Predict failure when uncertainty > threshold; a failure is a PDMS of exactly 0.

    ``records`` should come from the base planner. When no frame fails the TPR
    is reported as 1.0 (nothing was missed).
    """
    records = list(records)
    if not records:
        raise EmptyStreamError("no records to classify")
    fail = np.array([r.pdms == 0.0 for r in records])
    unc = np.array([r.uncertainty for r in records], dtype=np.float64)
    flag = np.nan_to_num(unc, nan=-np.inf) > threshold
    tp = int(np.sum(fail & flag))
    fn = int(np.sum(fail & ~flag))
    fp = int(np.sum(~fail & flag))
    tn = int(np.sum(~fail & ~flag))
    n = len(records)
    positives = tp + fn
    return FailureClassification(
        threshold=float(threshold),
        tpr=tp / positives if positives else 1.0,
        accuracy=(tp + tn) / n,
        tp=tp, fp=fp, tn=tn, fn=fn,
        select_all_accuracy=positives / n,
        select_none_accuracy=(n - positives) / n,
    )


def sweep_thresholds(records, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> list[FailureClassification]:
    out = [classify_failures(records, t) for t in thresholds]
    by_t = sorted(out, key=lambda c: c.threshold)
    if any(b.tpr > a.tpr for a, b in zip(by_t, by_t[1:])):
        raise RuntimeError("TPR increased with the threshold")  # cannot happen for a fixed record set
    return out


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class CategoryReport:
    pdms: dict  # category -> percent, None when the category has no frames
    counts: dict
    overall: float

    def to_markdown(self, label: str = "Planner") -> str:
        cols = list(CATEGORIES) + ([NONE_CATEGORY] if self.counts.get(NONE_CATEGORY) else [])
        head = "| Method | " + " | ".join(cols) + " | Overall |"
        sep = "|" + "---|" * (len(cols) + 2)
        vals = ["-" if self.pdms[c] is None else f"{self.pdms[c]:.1f}" for c in cols]
        return "\n".join([head, sep, f"| {label} | " + " | ".join(vals) + f" | {self.overall:.1f} |"]) + "\n"


def category_report(result: BenchmarkResult) -> CategoryReport:
    pdms = {c: (result.per_category[c]["pdms"] if c in result.per_category else None) for c in ALL_CATEGORIES}
    counts = {c: (result.per_category[c]["n"] if c in result.per_category else 0) for c in ALL_CATEGORIES}
    return CategoryReport(pdms, counts, result.overall["pdms"])


def _markdown(result: BenchmarkResult) -> str:
    lines = [
        "| Strategy | Measure | NC | DAC | EP | C | TTC | PDMS |",
        "|---|---|---|---|---|---|---|---|",
    ]
    row = lambda a, b, m: f"| {a} | {b} | " + " | ".join(f"{m[k]:.1f}" for k in METRICS) + " |"
    lines.append(row(result.strategy, result.measure, result.overall))
    if result.human is not None:
        lines.append(row("oracle", "-", result.human))
    return "\n".join(lines) + "\n"


def write_records_csv(records: Sequence[DeploymentRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(r, f) for f in RECORD_FIELDS)])


def read_records_csv(path) -> list[DeploymentRecord]:
    types = {f: t for f, t in DeploymentRecord.__annotations__.items()}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_FIELDS:
            raise ShapeMismatchError(f"unexpected record CSV header {reader.fieldnames}")
        for row in reader:
            conv = {"int": int, "float": float, "str": str}
            out.append(DeploymentRecord(**{f: conv[types[f]](row[f]) for f in RECORD_FIELDS}))
    return out


def emit_report(result: BenchmarkResult, path, format: str = "csv") -> Path:
    path = Path(path)
    if format == "csv":
        write_records_csv(result.records, path)
    elif format == "json":
        path.write_text(json.dumps(result.to_dict(), indent=1, sort_keys=True))
    elif format == "markdown":
        path.write_text(_markdown(result))
    else:
        raise InvalidParameterError(f"unknown report format {format!r}; expected one of {REPORT_FORMATS}")
    return path


def read_report(path, format: str = "json"):
    """Inverse of :func:`emit_report` for csv (records) and json (BenchmarkResult)."""
    if format == "csv":
        return read_records_csv(path)
    if format == "json":
        return BenchmarkResult.from_dict(json.loads(Path(path).read_text()))
    raise InvalidParameterError(f"format {format!r} cannot be read back")


def write_failure_csv(classes: Sequence[FailureClassification], path) -> None:
    fields = list(FailureClassification.__dataclass_fields__)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for c in classes:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (getattr(c, f) for f in fields)])


def failure_markdown(classes: Sequence[FailureClassification], measure: str = "cluster") -> str:
    lines = ["| Measure | Threshold | TPR | Acc. |", "|---|---|---|---|"]
    for c in classes:
        lines.append(f"| {measure} | {c.threshold:g} | {100 * c.tpr:.1f} | {100 * c.accuracy:.1f} |")
    if classes:
        c = classes[0]
        lines.append(f"| select all | - | 100.0 | {100 * c.select_all_accuracy:.1f} |")
        lines.append(f"| select none | - | 0.0 | {100 * c.select_none_accuracy:.1f} |")
    return "\n".join(lines) + "\n"
