"""Render score reports to figure and delimited files."""
from __future__ import annotations

from pathlib import Path

from matplotlib.figure import Figure

from .corpus import Category
from .scorer import ScoreReport


def save_score_figure(report: ScoreReport, path: str | Path) -> Path:
    """Grouped per-category precision/recall/F1 bars, macro-F1 in the title."""
    path = Path(path)
    categories = [c.value for c in Category]
    precision = [report.per_category[c].precision for c in Category]
    recall = [report.per_category[c].recall for c in Category]
    f1 = [report.per_category[c].f1 for c in Category]

    fig = Figure(figsize=(9, 4.5))
    ax = fig.subplots()
    x = range(len(categories))
    width = 0.27
    ax.bar([i - width for i in x], precision, width, label="Precision")
    ax.bar(list(x), recall, width, label="Recall")
    ax.bar([i + width for i in x], f1, width, label="F1")
    ax.set_xticks(list(x))
    ax.set_xticklabels(categories, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("score")
    ax.set_title(f"Per-category scores (macro-F1 = {report.macro_f1:.4f})")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    return path


def write_scores_tsv(report: ScoreReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["category\ttp\tfp\tfn\tprecision\trecall\tf1"]
    for category in Category:
        row = report.per_category[category]
        lines.append(
            f"{category.value}\t{row.tp}\t{row.fp}\t{row.fn}"
            f"\t{row.precision:.4f}\t{row.recall:.4f}\t{row.f1:.4f}"
        )
    lines.append(f"macro\t\t\t\t\t\t{report.macro_f1:.4f}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
