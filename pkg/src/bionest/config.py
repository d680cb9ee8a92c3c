"""Run configuration and the few-shot instruction pack.

A run is described by one JSON config file; command-line flags override
mode, endpoints, and paths.  The instruction pack maps each category to
its instruction text and few-shot examples, given either inline as
``{"text", "entities"}`` records or as training-corpus doc ids.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import Category, load_corpus
from .llm import CategoryInstruction, FewShotExample
from .resolver import ResolutionMode


class ConfigError(ValueError):
    pass


@dataclass
class LlmConfig:
    endpoint: str | None = None
    prompt_field: str = "prompt"
    response_path: str = "choices.0.text"
    params: dict = field(default_factory=dict)
    retries: int = 2
    timeout: float = 60.0
    max_inflight: int = 4
    instruction_pack: str | None = None
    examples_per_category: int = 2
    max_resamples: int = 3
    replay: str | None = None


@dataclass
class NerConfig:
    endpoint: str | None = None
    on_error: str = "skip"  # "skip" -> continue LLM-only, "abort" -> fail the document
    timeout: float = 30.0
    replay: str | None = None


@dataclass
class UmlsConfig:
    base_url: str = "https://uts-ws.nlm.nih.gov/rest"
    version: str = "2023AB"
    cache_path: str | None = None
    rate_limit_rps: float = 5.0
    page_size: int = 5
    mapping_path: str | None = None
    offline: bool = False  # cache-only: misses classify as empty, no network


@dataclass
class PipelineConfig:
    mode: str = "umls"
    workers: int = 1
    llm: LlmConfig = field(default_factory=LlmConfig)
    ner: NerConfig = field(default_factory=NerConfig)
    umls: UmlsConfig = field(default_factory=UmlsConfig)
    training_corpus: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("umls", "priority"):
            raise ConfigError(f"mode must be 'umls' or 'priority', got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.llm.examples_per_category < 1:
            raise ConfigError("examples_per_category must be >= 1")
        if self.llm.max_resamples < 0:
            raise ConfigError("max_resamples must be >= 0")
        if self.ner.on_error not in ("skip", "abort"):
            raise ConfigError(f"ner.on_error must be 'skip' or 'abort', got {self.ner.on_error!r}")

    @property
    def resolution_mode(self) -> ResolutionMode:
        return ResolutionMode(self.mode)


def _build_section(cls, data: dict, name: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {name} config keys: {sorted(unknown)}")
    return cls(**data)


def load_config(path: str | Path | None = None, **overrides) -> PipelineConfig:
    """Load a config file (or defaults) and apply top-level overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config root must be a JSON object, got {type(data).__name__}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        llm = _build_section(LlmConfig, data.pop("llm", {}), "llm")
        ner = _build_section(NerConfig, data.pop("ner", {}), "ner")
        umls = _build_section(UmlsConfig, data.pop("umls", {}), "umls")
        known = set(PipelineConfig.__dataclass_fields__) - {"llm", "ner", "umls"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return PipelineConfig(llm=llm, ner=ner, umls=umls, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def apply_replay_dir(config: PipelineConfig, replay_dir: str | Path) -> None:
    """Point all adapters at a recorded-fixture directory (fully offline run).

    Expected files: llm.jsonl (required), ner.jsonl (optional),
    umls_cache.jsonl (optional; enables agreement mode without network).
    """
    replay_dir = Path(replay_dir)
    llm_path = replay_dir / "llm.jsonl"
    if not llm_path.exists():
        raise ConfigError(f"replay dir {replay_dir} has no llm.jsonl")
    config.llm.replay = str(llm_path)
    ner_path = replay_dir / "ner.jsonl"
    config.ner.replay = str(ner_path) if ner_path.exists() else None
    if config.ner.replay is None:
        config.ner.endpoint = None
    cache_path = replay_dir / "umls_cache.jsonl"
    config.umls.offline = True
    if cache_path.exists():
        config.umls.cache_path = str(cache_path)


@dataclass
class InstructionPack:
    instructions: dict[Category, CategoryInstruction]
    examples: dict[Category, list[FewShotExample]]

    def examples_for(self, category: Category, count: int) -> list[FewShotExample]:
        available = self.examples.get(category, [])
        if len(available) < count:
            raise ConfigError(
                f"instruction pack provides {len(available)} example(s) for "
                f"{category.value}, {count} configured"
            )
        return available[:count]


def _examples_from_doc_ids(
    doc_ids: list[str], category: Category, training_corpus: str | None
) -> list[FewShotExample]:
    if training_corpus is None:
        raise ConfigError(
            f"instruction pack references doc ids for {category.value} "
            "but no training_corpus is configured"
        )
    by_id = {doc.doc_id: doc for doc in load_corpus(training_corpus)}
    examples = []
    for doc_id in doc_ids:
        doc = by_id.get(doc_id)
        if doc is None:
            raise ConfigError(f"example doc {doc_id!r} not found in {training_corpus}")
        surfaces = [
            m.surface
            for m in sorted(doc.mentions, key=lambda m: (m.span.start, m.span.end))
            if m.category is category
        ]
        if not surfaces:
            raise ConfigError(f"example doc {doc_id!r} has no {category.value} mentions")
        examples.append(FewShotExample(text=doc.text, entities=tuple(surfaces)))
    return examples


def load_instruction_pack(
    path: str | Path | None = None, training_corpus: str | None = None
) -> InstructionPack:
    """Load an instruction pack file, or the shipped default pack."""
    if path is None:
        raw = resources.files("bionest").joinpath("data/instruction_pack.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"instruction pack is not valid JSON: {exc}") from exc

    instructions: dict[Category, CategoryInstruction] = {}
    for label, text in data.get("instructions", {}).items():
        category = Category.parse(label)
        if not str(text).strip():
            raise ConfigError(f"empty instruction for {label}")
        instructions[category] = CategoryInstruction(category, str(text))
    missing = [c.value for c in Category if c not in instructions]
    if missing:
        raise ConfigError(f"instruction pack lacks instructions for: {missing}")

    examples: dict[Category, list[FewShotExample]] = {}
    inline = data.get("examples", {})
    doc_id_map = data.get("example_doc_ids", {})
    shared_doc_ids = doc_id_map if isinstance(doc_id_map, list) else None
    for category in Category:
        if category.value in inline:
            entries = inline[category.value]
            parsed = []
            for entry in entries:
                entities = tuple(str(e) for e in entry["entities"])
                if not entities or any(not e.strip() for e in entities):
                    raise ConfigError(
                        f"example for {category.value} has empty entities"
                    )
                parsed.append(FewShotExample(text=str(entry["text"]), entities=entities))
            examples[category] = parsed
        else:
            doc_ids = shared_doc_ids if shared_doc_ids is not None else doc_id_map.get(category.value)
            if not doc_ids:
                raise ConfigError(f"instruction pack lacks examples for {category.value}")
            examples[category] = _examples_from_doc_ids(doc_ids, category, training_corpus)
    return InstructionPack(instructions=instructions, examples=examples)
