"""Few-shot prompt construction, LLM completion adapters, and response parsing.

One prompt per entity category: an instruction line, two (configurable)
in-context examples, then the target abstract.  The model is expected to
answer with a single semicolon-separated entity list; responses that do
not follow that framing are resampled a bounded number of times and then
dropped with a warning.
"""
from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import requests

from .corpus import Category, Document

log = logging.getLogger(__name__)

API_KEY_ENV = "LLM_API_KEY"
SOURCE_LLM = "LLM"
SOURCE_NER = "NER"

# A bare response with no semicolon is accepted as a single entity only if
# it is one line, has no comma, and is at most this long.
_SINGLE_PHRASE_MAX_CHARS = 120


class NeedsResample(Exception):
    """The response did not follow the semicolon-list framing."""


class AdapterError(Exception):
    """Transport-level completion failure after configured retries."""


class EmptyExamples(ValueError):
    pass


class EmptyTargetText(ValueError):
    pass


@dataclass(frozen=True)
class CategoryInstruction:
    category: Category
    text: str


@dataclass(frozen=True)
class FewShotExample:
    text: str
    entities: tuple[str, ...]


@dataclass
class PromptConfig:
    examples_per_category: int = 2
    max_resamples: int = 3
    # Sampling parameters (temperature, max tokens, ...) passed through opaquely.
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.examples_per_category < 1:
            raise ValueError("examples_per_category must be >= 1")
        if self.max_resamples < 0:
            raise ValueError("max_resamples must be >= 0")


@dataclass
class CandidateSurface:
    surface: str
    proposed_categories: set[Category]
    sources: set[str]


@dataclass(frozen=True)
class LlmRequestContext:
    doc_id: str
    category: Category
    attempt: int


class LlmAdapter(Protocol):
    def complete(self, prompt: str, params: Mapping, context: LlmRequestContext) -> str:
        ...


def build_prompt(
    category: Category,
    instruction: CategoryInstruction,
    examples: Sequence[FewShotExample],
    target_text: str,
) -> str:
    """Render the few-shot prompt for one category.

    Layout: ``Instruction: <text>``, a blank line, then per example
    ``[TEXT]: <text>`` / ``[<CATEGORY>]: <entities joined by ";">`` / ``###``,
    then the target text with an open ``[<CATEGORY>]:`` line.
    """
    if not examples:
        raise EmptyExamples(f"no few-shot examples for {category.value}")
    if not target_text:
        raise EmptyTargetText("target text must be non-empty")
    if instruction.category is not category:
        raise ValueError(
            f"instruction for {instruction.category.value} used with {category.value}"
        )
    parts = [f"Instruction: {instruction.text}\n\n"]
    for example in examples:
        if not example.entities:
            raise EmptyExamples(f"example for {category.value} has no entities")
        parts.append(
            f"[TEXT]: {example.text}\n[{category.value}]: {';'.join(example.entities)}\n###\n"
        )
    parts.append(f"[TEXT]: {target_text}\n[{category.value}]:")
    return "".join(parts)


def parse_entity_list(raw: str) -> list[str]:
    """Split a response into entity surfaces.

    Semicolon-separated text is split, trimmed, and cleaned of empty
    pieces.  Without a semicolon, a single short comma-free line is
    accepted as one entity; anything else raises NeedsResample.
    """
    stripped = raw.strip()
    if not stripped:
        return []
    if ";" in stripped:
        return [piece.strip() for piece in stripped.split(";") if piece.strip()]
    if "\n" in stripped or "," in stripped or len(stripped) > _SINGLE_PHRASE_MAX_CHARS:
        raise NeedsResample(f"response is not a semicolon-separated list: {stripped[:80]!r}")
    return [stripped]


def postprocess(surfaces: Sequence[str], doc_text: str) -> list[str]:
    """Deduplicate case-insensitively (keeping first casing) and drop
    surfaces that do not occur in the document text."""
    haystack = doc_text.casefold()
    seen: set[str] = set()
    kept: list[str] = []
    for surface in surfaces:
        key = surface.casefold()
        if key in seen:
            continue
        seen.add(key)
        if key in haystack:
            kept.append(surface)
    return kept


class HttpLlmAdapter:
    """Completion client for an OpenAI-style HTTP endpoint.

    The prompt is POSTed as a JSON body ``{<prompt_field>: prompt,
    **params}`` and the generated text is extracted from the response via
    a dotted JSON path (default ``choices.0.text``).  Bearer auth is read
    from the LLM_API_KEY environment variable.
    """

    def __init__(
        self,
        endpoint: str,
        prompt_field: str = "prompt",
        response_path: str = "choices.0.text",
        retries: int = 2,
        timeout: float = 60.0,
        max_inflight: int = 4,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint
        self.prompt_field = prompt_field
        self.response_path = response_path
        self.retries = retries
        self.timeout = timeout
        self.session = session or requests.Session()
        self._semaphore = threading.Semaphore(max_inflight)
        self._sleep = sleep

    def complete(self, prompt: str, params: Mapping, context: LlmRequestContext) -> str:
        body = {self.prompt_field: prompt, **params}
        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with self._semaphore:
                    response = self.session.post(
                        self.endpoint, json=body, headers=headers, timeout=self.timeout
                    )
                response.raise_for_status()
                return extract_json_path(response.json(), self.response_path)
            except (requests.RequestException, ValueError, KeyError, IndexError) as exc:
                last_error = exc
                if attempt < self.retries:
                    self._sleep(0.5 * 2**attempt)
        raise AdapterError(
            f"completion for {context.doc_id}/{context.category.value} failed: {last_error}"
        ) from last_error


def extract_json_path(data: object, path: str) -> str:
    """Walk a dotted path through dicts/lists (integers index lists)."""
    node = data
    for part in path.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        elif isinstance(node, dict):
            node = node[part]
        else:
            raise KeyError(f"cannot descend into {type(node).__name__} at {part!r}")
    if not isinstance(node, str):
        raise ValueError(f"response path {path!r} did not yield a string")
    return node


class ReplayLlmAdapter:
    """Deterministic adapter backed by recorded responses.

    Fixture format: JSON lines of ``{"doc_id", "category", "attempt",
    "response"}``.  Lookups are strict; a missing record is an
    AdapterError so incomplete fixtures surface immediately.
    """

    def __init__(self, records: Mapping[tuple[str, str, int], str]) -> None:
        self._records = dict(records)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ReplayLlmAdapter":
        records: dict[tuple[str, str, int], str] = {}
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                entry = json.loads(line)
                key = (entry["doc_id"], entry["category"], int(entry.get("attempt", 0)))
                records[key] = entry["response"]
        return cls(records)

    def complete(self, prompt: str, params: Mapping, context: LlmRequestContext) -> str:
        key = (context.doc_id, context.category.value, context.attempt)
        try:
            return self._records[key]
        except KeyError:
            raise AdapterError(f"no recorded response for {key}") from None


def generate_llm_candidates(
    doc: Document,
    adapter: LlmAdapter,
    instructions: Mapping[Category, CategoryInstruction],
    examples: Mapping[Category, Sequence[FewShotExample]],
    config: PromptConfig,
    on_warning: Callable[[str], None] | None = None,
) -> list[CandidateSurface]:
    """Query all eight categories in declaration order and merge candidates.

    Per category: build prompt, complete, parse; on NeedsResample retry up
    to config.max_resamples times, then record a warning and treat the
    category as empty.  Candidates are merged by case-folded surface with
    proposed categories unioned.
    """

    def warn(message: str) -> None:
        log.warning(message)
        if on_warning is not None:
            on_warning(message)

    merged: dict[str, CandidateSurface] = {}
    for category in Category:
        prompt = build_prompt(
            category,
            instructions[category],
            examples[category][: config.examples_per_category],
            doc.text,
        )
        surfaces: list[str] | None = None
        for attempt in range(config.max_resamples + 1):
            raw = adapter.complete(
                prompt, config.params, LlmRequestContext(doc.doc_id, category, attempt)
            )
            try:
                surfaces = parse_entity_list(raw)
                break
            except NeedsResample:
                continue
        if surfaces is None:
            warn(
                f"{doc.doc_id}/{category.value}: response not semicolon-separated "
                f"after {config.max_resamples} resamples; no candidates for this category"
            )
            continue
        for surface in postprocess(surfaces, doc.text):
            key = surface.casefold()
            candidate = merged.get(key)
            if candidate is None:
                merged[key] = CandidateSurface(surface, {category}, {SOURCE_LLM})
            else:
                candidate.proposed_categories.add(category)
    return list(merged.values())
