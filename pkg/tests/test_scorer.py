from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bionest.corpus import AnnotatedDocument, Category, Document, Mention, Span
from bionest.scorer import (
    CategoryScore,
    diff_report,
    f1_score,
    macro_f1,
    render_json,
    render_table,
    score,
)

# Published per-category (precision, recall, F1) rows for the agreement-mode
# validation run; the F1 column must follow from the harmonic-mean formula.
TABLE_AGREEMENT = {
    Category.DISO: (0.7565, 0.5613, 0.6444),
    Category.CHEM: (0.7857, 0.4695, 0.5878),
    Category.ANATOMY: (0.8101, 0.4082, 0.5429),
    Category.LABPROC: (0.5357, 0.2632, 0.3529),
    Category.INJURY_POISONING: (0.2778, 0.4545, 0.3448),
    Category.DEVICE: (0.6250, 0.2, 0.3030),
    Category.PHYS: (0.4875, 0.1444, 0.2229),
    Category.FINDING: (0.1288, 0.2537, 0.1709),
}

# The published priority-order (no-UMLS) ablation rows.
TABLE_PRIORITY = {
    Category.DISO: (0.4551, 0.4676, 0.4613),
    Category.CHEM: (0.3731, 0.3049, 0.3356),
    Category.ANATOMY: (0.2036, 0.4629, 0.2828),
    Category.LABPROC: (0.1964, 0.0973, 0.1302),
    Category.INJURY_POISONING: (0.1304, 0.5455, 0.2105),
    Category.DEVICE: (0.069, 0.08, 0.0741),
    Category.PHYS: (0.0742, 0.10, 0.0852),
    Category.FINDING: (0.1357, 0.1463, 0.1408),
}


def _doc(doc_id: str, text: str, *mentions) -> AnnotatedDocument:
    return AnnotatedDocument(
        Document(doc_id, text),
        [Mention(c, Span(s, e), text[s:e]) for (c, s, e) in mentions],
    )


@pytest.mark.parametrize("category", list(Category))
def test_f1_formula_reproduces_published_agreement_rows(category):
    precision, recall, expected_f1 = TABLE_AGREEMENT[category]
    assert f1_score(precision, recall) == pytest.approx(expected_f1, abs=1e-3)


def test_macro_of_published_tables():
    agreement = macro_f1([row[2] for row in TABLE_AGREEMENT.values()])
    assert agreement == pytest.approx(0.3962, abs=5e-4)
    priority = macro_f1([row[2] for row in TABLE_PRIORITY.values()])
    assert priority == pytest.approx(0.2151, abs=5e-4)


def test_macro_requires_eight_rows():
    with pytest.raises(ValueError):
        macro_f1([0.5, 0.5])


def test_macro_all_zero():
    assert macro_f1([0.0] * 8) == 0.0


def test_identity_corpus():
    doc = _doc("d1", "pulmonary hypertension", (Category.DISO, 0, 22))
    report = score([doc], [doc])
    row = report.per_category[Category.DISO]
    assert (row.tp, row.fp, row.fn) == (1, 0, 0)
    assert row.precision == row.recall == row.f1 == 1.0
    assert report.macro_f1 == pytest.approx(1 / 8)


def test_empty_predictions_score_zero():
    gold = _doc("d1", "pulmonary hypertension", (Category.DISO, 0, 22))
    report = score([gold], [AnnotatedDocument(gold.document)])
    assert all(row.precision == 0.0 and row.recall == 0.0 for row in report.per_category.values())
    assert report.macro_f1 == 0.0


def test_duplicate_mentions_deduplicated():
    text = "aa bb"
    gold = _doc("d", text, (Category.CHEM, 0, 2), (Category.CHEM, 0, 2))
    pred = _doc("d", text, (Category.CHEM, 0, 2))
    report = score([gold], [pred])
    row = report.per_category[Category.CHEM]
    assert (row.tp, row.fp, row.fn) == (1, 0, 0)


def test_union_scoring_on_mismatched_doc_sets():
    gold = _doc("only_gold", "abc", (Category.PHYS, 0, 3))
    pred = _doc("only_pred", "abc", (Category.PHYS, 0, 3))
    report = score([gold], [pred])
    row = report.per_category[Category.PHYS]
    assert (row.tp, row.fp, row.fn) == (0, 1, 1)


def test_diff_report_rows():
    text = "aa bb cc"
    gold = _doc("d", text, (Category.DISO, 0, 2), (Category.CHEM, 3, 5))
    pred = _doc("d", text, (Category.DISO, 0, 2), (Category.PHYS, 6, 8))
    rows = diff_report([gold], [pred])
    assert [(r.kind, r.category, r.surface) for r in rows] == [
        ("fn", Category.CHEM, "bb"),
        ("fp", Category.PHYS, "cc"),
    ]
    assert diff_report([gold], [gold]) == []


def test_render_table_layout():
    doc = _doc("d1", "pulmonary hypertension", (Category.DISO, 0, 22))
    table = render_table(score([doc], [doc]))
    lines = table.splitlines()
    assert lines[0].split() == ["Category", "Precision", "Recall", "F1"]
    diso = next(line for line in lines if line.startswith("DISO"))
    assert "1.0000" in diso
    assert lines[-1].startswith("Macro-F1")
    assert "0.1250" in lines[-1]


def test_render_json_fields():
    doc = _doc("d1", "pulmonary hypertension", (Category.DISO, 0, 22))
    import json

    payload = json.loads(render_json(score([doc], [doc])))
    assert set(payload) == {"per_category", "macro_f1"}
    assert len(payload["per_category"]) == 8
    assert payload["per_category"]["DISO"]["f1"] == 1.0


# ---------------------------------------------------------------------------
# property tests

_mention_key = st.tuples(
    st.sampled_from([f"d{i}" for i in range(3)]),
    st.integers(min_value=0, max_value=8),
    st.integers(min_value=1, max_value=4),
    st.sampled_from(list(Category)),
)


def _corpus_from_keys(keys):
    text = "x" * 16
    docs: dict[str, list[Mention]] = {}
    for doc_id, start, length, category in keys:
        span = Span(start, start + length)
        docs.setdefault(doc_id, []).append(Mention(category, span, text[span.start:span.end]))
    return [AnnotatedDocument(Document(doc_id, text), ms) for doc_id, ms in sorted(docs.items())]


@settings(max_examples=200, deadline=None)
@given(st.lists(_mention_key, max_size=12), st.lists(_mention_key, max_size=12))
def test_count_conservation_and_symmetry(gold_keys, pred_keys):
    gold = _corpus_from_keys(gold_keys)
    pred = _corpus_from_keys(pred_keys)
    report = score(gold, pred)
    gold_unique = set(map(tuple, gold_keys))
    pred_unique = set(map(tuple, pred_keys))
    for category in Category:
        row = report.per_category[category]
        assert row.tp + row.fp == sum(1 for k in pred_unique if k[3] is category)
        assert row.tp + row.fn == sum(1 for k in gold_unique if k[3] is category)
        assert row.f1 == pytest.approx(f1_score(row.precision, row.recall))
    swapped = score(pred, gold)
    for category in Category:
        assert swapped.per_category[category].precision == report.per_category[category].recall
        assert swapped.per_category[category].recall == report.per_category[category].precision


@settings(max_examples=200, deadline=None)
@given(st.lists(_mention_key, min_size=1, max_size=12), st.lists(_mention_key, max_size=8))
def test_adding_correct_prediction_never_lowers_f1(gold_keys, pred_keys):
    gold = _corpus_from_keys(gold_keys)
    before = score(gold, _corpus_from_keys(pred_keys))
    extra = gold_keys[0]
    after = score(gold, _corpus_from_keys(pred_keys + [extra]))
    for category in Category:
        assert after.per_category[category].f1 >= before.per_category[category].f1 - 1e-12
