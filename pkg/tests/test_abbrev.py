from __future__ import annotations

import pytest

from bionest.abbrev import detect_abbreviations

from .sh_reference import extract_pairs as reference_pairs

# Curated sentences with the pairs both implementations must find.
CURATED = [
    (
        "in patients with elevated mean pulmonary artery pressure (MPAP) during exercise.",
        {"MPAP": "mean pulmonary artery pressure"},
    ),
    ("stem cell niches (SCN) were studied", {"SCN": "stem cell niches"}),
    (
        "Magnetic resonance imaging (MRI) was performed in all patients.",
        {"MRI": "Magnetic resonance imaging"},
    ),
    (
        "Chronic obstructive pulmonary disease (COPD) is common in this cohort.",
        {"COPD": "Chronic obstructive pulmonary disease"},
    ),
    ("body mass index (BMI) and waist circumference were recorded.", {"BMI": "body mass index"}),
    ("Admission to the intensive care unit (ICU) was required.", {"ICU": "intensive care unit"}),
    ("The erythrocyte sedimentation rate (ESR) was elevated.", {"ESR": "erythrocyte sedimentation rate"}),
    (
        "with left ventricular ejection fraction (LVEF) below 40%",
        {"LVEF": "left ventricular ejection fraction"},
    ),
    ("A computed tomography (CT) scan was obtained.", {"CT": "computed tomography"}),
    (
        "Mean arterial pressure (MAP) and heart rate (HR) were stable.",
        {"MAP": "Mean arterial pressure", "HR": "heart rate"},
    ),
    # reversed orientation: definition inside the parentheses
    (
        "MPAP (mean pulmonary artery pressure) was measured at rest.",
        {"MPAP": "mean pulmonary artery pressure"},
    ),
    # digits-only short form is rejected
    ("treated in 2019 (2019) with surgery.", {}),
    # over-length short form is rejected
    ("diagnosed with idiopathic pulmonary arterial hypertension (IPAHTNXYZQW) last year.", {}),
    # parenthetical that defines nothing
    ("The study (see Methods) was approved by the board.", {}),
]


@pytest.mark.parametrize("sentence,expected", CURATED, ids=[s[:32] for s, _ in CURATED])
def test_curated_sentences_match_reference(sentence, expected):
    ours = {p.short_form: p.long_form for p in detect_abbreviations(sentence)}
    assert ours == expected
    assert reference_pairs(sentence) == expected


def test_fig_pair_from_abstract_context():
    text = (
        "AIM To describe hemodynamic and clinical changes in patients with elevated "
        "mean pulmonary artery pressure (MPAP) after six months."
    )
    pairs = detect_abbreviations(text)
    assert len(pairs) == 1
    pair = pairs[0]
    assert pair.short_form == "MPAP"
    assert pair.long_form == "mean pulmonary artery pressure"
    assert pair.short_in_parens


def test_spans_slice_text_exactly():
    for sentence, expected in CURATED:
        for pair in detect_abbreviations(sentence):
            assert sentence[pair.short_span.start:pair.short_span.end] == pair.short_form
            assert sentence[pair.long_span.start:pair.long_span.end] == pair.long_form


def test_in_order_character_containment():
    for sentence, _ in CURATED:
        for pair in detect_abbreviations(sentence):
            lf = pair.long_form.lower()
            pos = 0
            for ch in pair.short_form.lower():
                if not ch.isalnum():
                    continue
                pos = lf.find(ch, pos)
                assert pos != -1, (pair.short_form, pair.long_form)
                pos += 1


def test_locality_appending_text_keeps_pairs():
    base = "Mean arterial pressure (MAP) and heart rate (HR) were stable."
    before = detect_abbreviations(base)
    extended = detect_abbreviations(base + " Further text without definitions follows here.")
    assert extended[: len(before)] == before


def test_reversed_orientation_flagged():
    pairs = detect_abbreviations("MPAP (mean pulmonary artery pressure) was measured.")
    assert len(pairs) == 1
    assert not pairs[0].short_in_parens


def test_nested_parens_not_descended():
    text = "measured values (see panel (a)) were consistent"
    assert detect_abbreviations(text) == []


def test_enumeration_truncated_to_first_item():
    pairs = detect_abbreviations("elevated body mass index (BMI, n = 12) was noted.")
    assert [(p.short_form, p.long_form) for p in pairs] == [("BMI", "body mass index")]


def test_unbalanced_parens_do_not_crash():
    assert detect_abbreviations("an open ( parenthesis without close") == []
    assert detect_abbreviations(") stray close ( and ( more") == []


def test_no_parens_no_pairs():
    assert detect_abbreviations("plain sentence without any parenthesis") == []
