from __future__ import annotations

import json

import pytest

from bionest.config import load_instruction_pack
from bionest.corpus import Category, Document
from bionest.llm import (
    AdapterError,
    CandidateSurface,
    CategoryInstruction,
    EmptyExamples,
    EmptyTargetText,
    FewShotExample,
    HttpLlmAdapter,
    LlmRequestContext,
    NeedsResample,
    PromptConfig,
    ReplayLlmAdapter,
    build_prompt,
    extract_json_path,
    generate_llm_candidates,
    parse_entity_list,
    postprocess,
)

from .conftest import ANATOMY_PROMPT, ANATOMY_RESPONSE, HERNIA_TEXT


def _ctx(doc_id="d", category=Category.ANATOMY, attempt=0):
    return LlmRequestContext(doc_id, category, attempt)


# ---------------------------------------------------------------------------
# prompt construction

def test_prompt_matches_published_example_byte_for_byte():
    pack = load_instruction_pack()
    prompt = build_prompt(
        Category.ANATOMY,
        pack.instructions[Category.ANATOMY],
        pack.examples_for(Category.ANATOMY, 2),
        HERNIA_TEXT,
    )
    assert prompt == ANATOMY_PROMPT


def test_prompt_single_example_layout():
    instruction = CategoryInstruction(Category.ANATOMY, "List anatomy entities")
    example = FewShotExample(text="the lung is large", entities=("lung",))
    prompt = build_prompt(Category.ANATOMY, instruction, [example], "target text")
    assert prompt == (
        "Instruction: List anatomy entities\n"
        "\n"
        "[TEXT]: the lung is large\n"
        "[ANATOMY]: lung\n"
        "###\n"
        "[TEXT]: target text\n"
        "[ANATOMY]:"
    )


def test_prompt_rejects_empty_examples_and_target():
    instruction = CategoryInstruction(Category.DISO, "x")
    with pytest.raises(EmptyExamples):
        build_prompt(Category.DISO, instruction, [], "text")
    with pytest.raises(EmptyTargetText):
        build_prompt(
            Category.DISO, instruction, [FewShotExample("t", ("e",))], ""
        )


def test_prompt_rejects_mismatched_instruction():
    instruction = CategoryInstruction(Category.DISO, "x")
    with pytest.raises(ValueError):
        build_prompt(Category.CHEM, instruction, [FewShotExample("t", ("e",))], "text")


# ---------------------------------------------------------------------------
# response parsing

def test_parse_published_response_yields_13_surfaces():
    surfaces = parse_entity_list(ANATOMY_RESPONSE)
    assert len(surfaces) == 13
    assert surfaces[0] == "abdominal wall defect"
    assert surfaces[-1] == "original"


def test_parse_single_phrase_accepted():
    assert parse_entity_list("lung") == ["lung"]
    assert parse_entity_list("  lung \n") == ["lung"]


def test_parse_comma_without_semicolon_resamples():
    with pytest.raises(NeedsResample):
        parse_entity_list("lung, heart, artery")


def test_parse_multiline_without_semicolon_resamples():
    with pytest.raises(NeedsResample):
        parse_entity_list("lung\nheart")


def test_parse_overlong_single_phrase_resamples():
    with pytest.raises(NeedsResample):
        parse_entity_list("x" * 121)
    assert parse_entity_list("x" * 120) == ["x" * 120]


def test_parse_empty_returns_empty():
    assert parse_entity_list("") == []
    assert parse_entity_list("   \n ") == []


def test_parse_drops_empty_pieces_and_trims():
    assert parse_entity_list(" lung ; ; heart;") == ["lung", "heart"]


# ---------------------------------------------------------------------------
# post-processing

def test_postprocess_dedup_and_presence():
    assert postprocess(["lung", "Lung", "Mars"], "the lung is large") == ["lung"]


def test_postprocess_keeps_first_casing_and_order():
    out = postprocess(["Lung", "lung", "heart"], "lung and heart")
    assert out == ["Lung", "heart"]


def test_postprocess_empty():
    assert postprocess([], "anything") == []


def test_postprocess_published_response_against_truncated_abstract():
    surfaces = parse_entity_list(ANATOMY_RESPONSE)
    kept = postprocess(surfaces, HERNIA_TEXT)
    # independent check: plain substring scan over the case-folded text
    expected = [s for s in surfaces if s.casefold() in HERNIA_TEXT.casefold()]
    assert kept == expected


# ---------------------------------------------------------------------------
# adapters

def test_replay_adapter_round_trip(tmp_path):
    path = tmp_path / "llm.jsonl"
    path.write_text(
        json.dumps({"doc_id": "d", "category": "ANATOMY", "attempt": 0, "response": "lung"})
        + "\n",
        encoding="utf-8",
    )
    adapter = ReplayLlmAdapter.from_jsonl(path)
    assert adapter.complete("prompt", {}, _ctx()) == "lung"
    assert adapter.complete("prompt", {}, _ctx()) == "lung"  # deterministic
    with pytest.raises(AdapterError):
        adapter.complete("prompt", {}, _ctx(attempt=1))


def test_http_adapter_posts_prompt_and_extracts_path(fixture_server, monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "secret-token")
    captured = {}

    def routes(method, path, payload):
        captured["payload"] = payload
        return 200, {"choices": [{"text": "lung; heart"}]}

    server = fixture_server(routes)
    adapter = HttpLlmAdapter(endpoint=server.url + "/v1/completions")
    out = adapter.complete("PROMPT", {"temperature": 0.2, "max_tokens": 64}, _ctx())
    assert out == "lung; heart"
    assert captured["payload"] == {"prompt": "PROMPT", "temperature": 0.2, "max_tokens": 64}


def test_http_adapter_error_after_retries(fixture_server):
    server = fixture_server(lambda m, p, b: (500, {}))
    adapter = HttpLlmAdapter(endpoint=server.url, retries=1, sleep=lambda s: None)
    with pytest.raises(AdapterError):
        adapter.complete("PROMPT", {}, _ctx())


def test_extract_json_path():
    assert extract_json_path({"a": [{"b": "x"}]}, "a.0.b") == "x"
    with pytest.raises(KeyError):
        extract_json_path({"a": "no"}, "a.b")
    with pytest.raises(ValueError):
        extract_json_path({"a": 3}, "a")


# ---------------------------------------------------------------------------
# candidate generation

class StubAdapter:
    """Returns canned responses per category; records attempts."""

    def __init__(self, responses):
        self.responses = responses
        self.calls: list[LlmRequestContext] = []

    def complete(self, prompt, params, context):
        self.calls.append(context)
        value = self.responses.get(context.category, "")
        if callable(value):
            return value(context)
        return value


def _pack_maps():
    pack = load_instruction_pack()
    examples = {c: pack.examples_for(c, 2) for c in Category}
    return pack.instructions, examples


def test_generate_merges_fig_example_anatomy_only():
    instructions, examples = _pack_maps()
    doc = Document("26273779_en", HERNIA_TEXT)
    adapter = StubAdapter({Category.ANATOMY: ANATOMY_RESPONSE})
    out = generate_llm_candidates(doc, adapter, instructions, examples, PromptConfig())
    expected_surfaces = postprocess(parse_entity_list(ANATOMY_RESPONSE), HERNIA_TEXT)
    assert [c.surface for c in out] == expected_surfaces
    assert all(c.proposed_categories == {Category.ANATOMY} for c in out)
    assert all(c.sources == {"LLM"} for c in out)


def test_generate_resamples_then_gives_up_with_warning_per_category():
    instructions, examples = _pack_maps()
    doc = Document("d", "some text")
    adapter = StubAdapter({c: "a, b" for c in Category})
    warnings = []
    out = generate_llm_candidates(
        doc, adapter, instructions, examples,
        PromptConfig(max_resamples=3), on_warning=warnings.append,
    )
    assert out == []
    assert len(warnings) == 8
    # 1 initial + 3 resamples per category
    per_category = [c for c in adapter.calls if c.category is Category.DISO]
    assert [ctx.attempt for ctx in per_category] == [0, 1, 2, 3]


def test_generate_resample_recovers_on_second_attempt():
    instructions, examples = _pack_maps()
    doc = Document("d", "the lung is large")

    def flaky(context):
        return "a, b" if context.attempt == 0 else "lung"

    adapter = StubAdapter({Category.ANATOMY: flaky})
    out = generate_llm_candidates(doc, adapter, instructions, examples, PromptConfig())
    assert [c.surface for c in out] == ["lung"]


def test_generate_multi_category_surface_merged():
    instructions, examples = _pack_maps()
    text = "low cardiac contractility affects cerebral ischemia and neuronal dysfunction"
    doc = Document("25726786_en", text)
    proposing = {Category.DISO, Category.ANATOMY, Category.PHYS, Category.FINDING, Category.CHEM}
    adapter = StubAdapter({c: "neuronal dysfunction" for c in proposing})
    out = generate_llm_candidates(doc, adapter, instructions, examples, PromptConfig())
    assert len(out) == 1
    assert out[0].surface == "neuronal dysfunction"
    assert out[0].proposed_categories == proposing


def test_generate_query_order_is_declaration_order():
    instructions, examples = _pack_maps()
    doc = Document("d", "text")
    adapter = StubAdapter({})
    generate_llm_candidates(doc, adapter, instructions, examples, PromptConfig())
    assert [ctx.category for ctx in adapter.calls] == list(Category)


def test_generate_candidates_pass_presence_invariant():
    instructions, examples = _pack_maps()
    doc = Document("d", "the Lung is large")
    adapter = StubAdapter({Category.ANATOMY: "lung; venus", Category.DISO: "LUNG"})
    out = generate_llm_candidates(doc, adapter, instructions, examples, PromptConfig())
    assert len(out) == 1
    candidate = out[0]
    assert candidate.surface.casefold() in doc.text.casefold()
    assert candidate.proposed_categories == {Category.DISO, Category.ANATOMY}
