"""Exact-match nested-NER evaluation.

Gold and predicted corpora are reduced to sets of (doc_id, start, end,
category) keys; per-category precision/recall/F1 and the unweighted
macro-F1 over all eight categories are reported.  Zero-denominator
metrics are 0 by convention.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import AnnotatedDocument, Category

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class MatchKey:
    doc_id: str
    start: int
    end: int
    category: Category


@dataclass(frozen=True)
class CategoryScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "CategoryScore":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return cls(tp, fp, fn, precision, recall, f1_score(precision, recall))


@dataclass(frozen=True)
class ScoreReport:
    per_category: dict[Category, CategoryScore]
    macro_f1: float


@dataclass(frozen=True, order=True)
class DiffRow:
    doc_id: str
    start: int
    end: int
    category: Category
    surface: str
    kind: str  # "fp" | "fn"


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def macro_f1(rows: Sequence[CategoryScore | float]) -> float:
    """Unweighted arithmetic mean of the eight per-category F1 values."""
    values = [row.f1 if isinstance(row, CategoryScore) else float(row) for row in rows]
    if len(values) != len(Category):
        raise ValueError(f"expected {len(Category)} rows, got {len(values)}")
    return sum(values) / len(values)


def match_keys(corpus: Iterable[AnnotatedDocument]) -> dict[MatchKey, str]:
    """Deduplicated mention keys, each mapped to its surface string."""
    keys: dict[MatchKey, str] = {}
    for doc in corpus:
        for mention in doc.mentions:
            key = MatchKey(doc.doc_id, mention.span.start, mention.span.end, mention.category)
            keys.setdefault(key, mention.surface)
    return keys


def score(
    gold: Iterable[AnnotatedDocument], pred: Iterable[AnnotatedDocument]
) -> ScoreReport:
    gold = list(gold)
    pred = list(pred)
    gold_ids = {d.doc_id for d in gold}
    pred_ids = {d.doc_id for d in pred}
    if gold_ids != pred_ids:
        log.warning(
            "corpora cover different documents (gold-only: %d, pred-only: %d); "
            "scoring over the union",
            len(gold_ids - pred_ids),
            len(pred_ids - gold_ids),
        )
    gold_keys = set(match_keys(gold))
    pred_keys = set(match_keys(pred))
    per_category: dict[Category, CategoryScore] = {}
    for category in Category:
        g = {k for k in gold_keys if k.category is category}
        p = {k for k in pred_keys if k.category is category}
        tp = len(g & p)
        per_category[category] = CategoryScore.from_counts(tp, len(p) - tp, len(g) - tp)
    return ScoreReport(per_category, macro_f1(list(per_category.values())))


def diff_report(
    gold: Iterable[AnnotatedDocument], pred: Iterable[AnnotatedDocument]
) -> list[DiffRow]:
    """False positives and false negatives, ordered by (doc_id, start, end, category)."""
    gold_keys = match_keys(gold)
    pred_keys = match_keys(pred)
    rows = [
        DiffRow(k.doc_id, k.start, k.end, k.category, surface, "fp")
        for k, surface in pred_keys.items()
        if k not in gold_keys
    ]
    rows += [
        DiffRow(k.doc_id, k.start, k.end, k.category, surface, "fn")
        for k, surface in gold_keys.items()
        if k not in pred_keys
    ]
    return sorted(rows, key=lambda r: (r.doc_id, r.start, r.end, r.category.value, r.kind))


def render_table(report: ScoreReport) -> str:
    width = max(len(c.value) for c in Category)
    header = f"{'Category':<{width}}  Precision  Recall  F1"
    lines = [header, "-" * len(header)]
    for category in Category:
        row = report.per_category[category]
        lines.append(
            f"{category.value:<{width}}  {row.precision:>9.4f}  {row.recall:>6.4f}  {row.f1:.4f}"
        )
    lines.append("-" * len(header))
    lines.append(f"{'Macro-F1':<{width}}  {report.macro_f1:.4f}")
    return "\n".join(lines)


def report_to_dict(report: ScoreReport) -> dict:
    return {
        "per_category": {
            category.value: {
                "tp": row.tp,
                "fp": row.fp,
                "fn": row.fn,
                "precision": row.precision,
                "recall": row.recall,
                "f1": row.f1,
            }
            for category, row in report.per_category.items()
        },
        "macro_f1": report.macro_f1,
    }


def render_json(report: ScoreReport) -> str:
    return json.dumps(report_to_dict(report), indent=2)
