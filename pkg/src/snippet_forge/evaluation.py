"""Scoring, per-library aggregation, run summaries, error taxonomy, and report writers."""
from __future__ import annotations

import csv
import enum
import json
import statistics
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import EmptyInput
from .kb.index import PLATFORM_PREFIXES, InverseIndex
from .snippets import ImportSet, MatchCategory, classify_match
from .validator import ErrorCategory, ValidationReport

# column order used by the match-distribution table
MATCH_ORDER = (MatchCategory.SAME, MatchCategory.DIFFERENT, MatchCategory.EXTRA,
               MatchCategory.MISSING, MatchCategory.NONE)
TAXONOMY_COLUMNS = (ErrorCategory.SYMBOL_NOT_FOUND, ErrorCategory.WRONG_ANNOTATION, ErrorCategory.METHOD_OVERRIDE)


def score_imports(pred: ImportSet, truth: ImportSet) -> tuple[int, int, int]:
    """(tp, fp, fn) under canonical-form equality."""
    return len(pred & truth), len(pred - truth), len(truth - pred)


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1.  An empty denominator gives 1; F1 is 0 when P + R is 0."""
    p = tp / (tp + fp) if tp + fp else 1.0
    r = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


@dataclass(frozen=True)
class SnippetScore:
    snippet_id: str
    library_label: str
    tp: int
    fp: int
    fn: int
    match: MatchCategory
    compiled: bool
    rounds_used: int = 0

    @classmethod
    def from_sets(cls, snippet_id: str, library_label: str, pred: ImportSet, truth: ImportSet,
                  compiled: bool, rounds_used: int = 0) -> "SnippetScore":
        tp, fp, fn = score_imports(pred, truth)
        return cls(snippet_id, library_label, tp, fp, fn, classify_match(pred, truth), compiled, rounds_used)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["match"] = self.match.value
        return d


def _empty_distribution() -> dict[MatchCategory, int]:
    return {m: 0 for m in MATCH_ORDER}


@dataclass
class LibraryMetrics:
    library_label: str
    precision: float
    recall: float
    f1: float
    compiled_count: int
    total_count: int
    match_distribution: dict[MatchCategory, int] = field(default_factory=_empty_distribution)
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        for name in ("precision", "recall", "f1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if not 0 <= self.compiled_count <= self.total_count:
            raise ValueError(f"compiled_count {self.compiled_count} not in [0, {self.total_count}]")

    @property
    def cr(self) -> float:
        return self.compiled_count / self.total_count if self.total_count else 0.0

    def to_dict(self) -> dict:
        return {
            "library": self.library_label,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "compiled": self.compiled_count,
            "total": self.total_count,
            "cr": self.cr,
            "match": {m.value: self.match_distribution.get(m, 0) for m in MATCH_ORDER},
        }


def aggregate_library(scores: Sequence[SnippetScore]) -> LibraryMetrics:
    """Micro-average: sum TP/FP/FN over the library's snippets, then compute P/R/F1."""
    if not scores:
        raise EmptyInput("no scores to aggregate")
    labels = {s.library_label for s in scores}
    if len(labels) != 1:
        raise ValueError(f"scores span several libraries: {sorted(labels)}")
    tp = sum(s.tp for s in scores)
    fp = sum(s.fp for s in scores)
    fn = sum(s.fn for s in scores)
    p, r, f1 = prf(tp, fp, fn)
    dist = _empty_distribution()
    for s in scores:
        dist[s.match] += 1
    compiled = sum(s.compiled for s in scores)
    return LibraryMetrics(labels.pop(), p, r, f1, compiled, len(scores), dist, tp, fp, fn)


def aggregate_by_library(scores: Iterable[SnippetScore]) -> list[LibraryMetrics]:
    groups: dict[str, list[SnippetScore]] = defaultdict(list)
    for s in scores:
        groups[s.library_label].append(s)
    return [aggregate_library(groups[k]) for k in sorted(groups)]


@dataclass
class RunSummary:
    """Macro mean of per-library F1/Rec/Pre; compilation rate pooled over all snippets."""

    f1: float
    recall: float
    precision: float
    compiled: int
    total: int
    match_distribution: dict[MatchCategory, int] = field(default_factory=_empty_distribution)

    @property
    def cr(self) -> float:
        return self.compiled / self.total if self.total else 0.0

    def match_share(self, category: MatchCategory) -> float:
        return self.match_distribution.get(category, 0) / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "f1_macro": self.f1,
            "recall_macro": self.recall,
            "precision_macro": self.precision,
            "compiled": self.compiled,
            "total": self.total,
            "cr_pooled": self.cr,
            "match": {m.value: self.match_distribution.get(m, 0) for m in MATCH_ORDER},
        }


def summarize_run(per_library: Sequence[LibraryMetrics]) -> RunSummary:
    if not per_library:
        raise EmptyInput("no libraries to summarize")
    n = len(per_library)
    dist = _empty_distribution()
    for lib in per_library:
        for m, c in lib.match_distribution.items():
            dist[m] = dist.get(m, 0) + c
    return RunSummary(
        f1=sum(l.f1 for l in per_library) / n,
        recall=sum(l.recall for l in per_library) / n,
        precision=sum(l.precision for l in per_library) / n,
        compiled=sum(l.compiled_count for l in per_library),
        total=sum(l.total_count for l in per_library),
        match_distribution=dist,
    )


def median_of_runs(runs: Sequence[RunSummary]) -> RunSummary:
    """Element-wise median; with an even count the lower median is taken."""
    if not runs:
        raise EmptyInput("no runs to take the median of")

    def med(values):
        return statistics.median_low(values)

    return RunSummary(
        f1=med([r.f1 for r in runs]),
        recall=med([r.recall for r in runs]),
        precision=med([r.precision for r in runs]),
        # the pooled rate is medianed through its numerator; totals agree across runs
        compiled=med([r.compiled for r in runs]),
        total=med([r.total for r in runs]),
        match_distribution={m: med([r.match_distribution.get(m, 0) for r in runs]) for m in MATCH_ORDER},
    )


# --- error taxonomy -------------------------------------------------------

@dataclass
class TaxonomyRow:
    library_label: str
    before: dict[ErrorCategory, int]
    after: dict[ErrorCategory, int]

    def to_dict(self) -> dict:
        return {
            "library": self.library_label,
            "before": {c.value: self.before.get(c, 0) for c in ErrorCategory},
            "after": {c.value: self.after.get(c, 0) for c in ErrorCategory},
        }


def _snippet_categories(report: Optional[ValidationReport]) -> set[ErrorCategory]:
    return set() if report is None else report.categories()


def error_taxonomy_table(before: Sequence[Optional[ValidationReport]], after: Sequence[Optional[ValidationReport]],
                         labels: Sequence[str] | None = None) -> list[TaxonomyRow]:
    """Per library, how many snippets show at least one error of each category, before and after."""
    if len(before) != len(after):
        raise ValueError("before and after reports must be paired by snippet")
    labels = list(labels) if labels is not None else ["all"] * len(before)
    if len(labels) != len(before):
        raise ValueError("one library label per snippet is required")
    rows: dict[str, TaxonomyRow] = {}
    for lib, b, a in zip(labels, before, after):
        row = rows.setdefault(lib, TaxonomyRow(lib, {c: 0 for c in ErrorCategory}, {c: 0 for c in ErrorCategory}))
        for cat in _snippet_categories(b):
            row.before[cat] += 1
        for cat in _snippet_categories(a):
            row.after[cat] += 1
    return [rows[k] for k in sorted(rows)]


# --- failure labels -------------------------------------------------------

class FailureLabel(str, enum.Enum):
    UNCONSTRAINED_CLASS = "UnconstrainedClass"
    PARTIAL_INFERENCE = "PartialInference"
    FAKE_INFERENCE = "FakeInference"
    ALTERNATIVE_INFERENCE = "AlternativeInference"
    UNEXPECTED_CODE_MODIFICATION = "UnexpectedCodeModification"
    UNLABELED = "Unlabeled"


def prelabel_failure(pred: ImportSet, truth: ImportSet, *, body_modified: bool = False,
                     final_report: Optional[ValidationReport] = None, kb: InverseIndex | None = None,
                     platform_prefixes: tuple[str, ...] = PLATFORM_PREFIXES) -> FailureLabel:
    """Heuristic first guess at why a snippet failed; reviewers may override it."""
    if body_modified:
        return FailureLabel.UNEXPECTED_CODE_MODIFICATION
    wrong = pred - truth
    missed = truth - pred
    missed_simple = {s.simple_name: s for s in missed}
    for stmt in wrong:
        twin = missed_simple.get(stmt.simple_name)
        if twin is not None and twin.fqn != stmt.fqn:
            return FailureLabel.PARTIAL_INFERENCE
    if kb is not None:
        for stmt in wrong:
            if stmt.wildcard or stmt.fqn.startswith(platform_prefixes):
                continue
            if stmt.fqn not in kb:
                return FailureLabel.FAKE_INFERENCE
        if any(stmt.fqn in kb for stmt in wrong):
            return FailureLabel.ALTERNATIVE_INFERENCE
    if not wrong and not missed and final_report is not None:
        if ErrorCategory.SYMBOL_NOT_FOUND in final_report.categories():
            # imports are right yet a type stays unresolved: nothing to import it from
            return FailureLabel.UNCONSTRAINED_CLASS
    return FailureLabel.UNLABELED


WORKSHEET_FIELDS = ("snippet_id", "library", "compiled", "match", "fp", "fn", "heuristic_label", "label", "notes")


def write_worksheet(path: Path | str, rows: Iterable[Mapping]) -> Path:
    """CSV for manual review; the ``label`` column is left blank for a reviewer."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=WORKSHEET_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in WORKSHEET_FIELDS})
    return path


def read_worksheet(path: Path | str) -> dict[str, FailureLabel]:
    """Final label per snippet: the reviewer's label if present, else the heuristic one."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            chosen = (row.get("label") or "").strip() or row["heuristic_label"]
            out[row["snippet_id"]] = FailureLabel(chosen)
    return out


# --- report writers -------------------------------------------------------

def _pct(num: int, den: int, digits: int = 1) -> str:
    return f"{round(100 * num / den, digits):g}%" if den else "n/a"


def write_table3(path: Path | str, per_library: Sequence[LibraryMetrics], summary: RunSummary) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["library", "F1", "Rec", "Pre", "CR"])
        for lib in per_library:
            w.writerow([lib.library_label, f"{lib.f1:.3f}", f"{lib.recall:.3f}", f"{lib.precision:.3f}",
                        f"{lib.compiled_count} ({_pct(lib.compiled_count, lib.total_count)})"])
        w.writerow(["Summary", f"{summary.f1:.3f}", f"{summary.recall:.3f}", f"{summary.precision:.3f}",
                    f"{summary.compiled} ({_pct(summary.compiled, summary.total)})"])
    return path


def write_table4(path: Path | str, runs: Mapping[str, RunSummary]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["approach", *(m.value for m in MATCH_ORDER)])
        for name, run in runs.items():
            cells = [f"{run.match_distribution.get(m, 0)} ({_pct(run.match_distribution.get(m, 0), run.total, 2)})"
                     for m in MATCH_ORDER]
            w.writerow([name, *cells])
    return path


def write_table6(path: Path | str, rows: Sequence[TaxonomyRow]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["library", *(f"before_{c.value}" for c in TAXONOMY_COLUMNS),
                    *(f"after_{c.value}" for c in TAXONOMY_COLUMNS)])
        for row in rows:
            w.writerow([row.library_label, *(row.before.get(c, 0) for c in TAXONOMY_COLUMNS),
                        *(row.after.get(c, 0) for c in TAXONOMY_COLUMNS)])
    return path


def write_run_report(out_dir: Path | str, scores: Sequence[SnippetScore], per_library: Sequence[LibraryMetrics],
                     summary: RunSummary, taxonomy: Sequence[TaxonomyRow] = (), extra: dict | None = None) -> Path:
    """``report.json`` plus CSV tables laid out like the published ones."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "aggregation": {"library": "micro (summed TP/FP/FN)", "summary": "macro mean of libraries; CR pooled"},
        "summary": summary.to_dict(),
        "libraries": [lib.to_dict() for lib in per_library],
        "snippets": [s.to_dict() for s in scores],
        "taxonomy": [row.to_dict() for row in taxonomy],
        **(extra or {}),
    }
    path = out / "report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=False), encoding="utf-8")
    write_table3(out / "table_metrics.csv", per_library, summary)
    write_table4(out / "table_match.csv", {"run": summary})
    if taxonomy:
        write_table6(out / "table_taxonomy.csv", taxonomy)
    return path
