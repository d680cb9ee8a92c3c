"""End-to-end prediction pipeline.

Per document: LLM candidates and NER candidates are merged into one
candidate pool, classified through the UMLS heuristics (agreement mode)
or not (priority mode), resolved to final categories, extended by
abbreviation propagation, grounded to character spans, and written as
``<doc_id>.ann`` (+ ``<doc_id>.txt``) into the output directory.

Documents are processed by a bounded worker pool; all shared services are
internally synchronized, so output is deterministic for any worker count
when the adapters are deterministic (replay fixtures).
"""
from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import abbrev, llm, ner_client, resolver
from .config import InstructionPack, PipelineConfig, load_instruction_pack
from .corpus import AnnotatedDocument, Category, Document, load_corpus, write_annotated
from .llm import CandidateSurface, PromptConfig
from .resolver import Rejection, ResolutionMode
from .umls import CategoryMapping, TermCache, TokenBucket, UmlsClassifier, UmlsClient

log = logging.getLogger(__name__)


@dataclass
class Services:
    """Shared, internally synchronized collaborators for one run."""

    instructions: Mapping[Category, llm.CategoryInstruction]
    examples: Mapping[Category, Sequence[llm.FewShotExample]]
    prompt_config: PromptConfig
    llm_adapter: llm.LlmAdapter
    ner: ner_client.NerClient | None
    ner_on_error: str
    classifier: UmlsClassifier | None
    mode: ResolutionMode


@dataclass
class DocumentReport:
    doc_id: str
    mentions: int = 0
    candidates: int = 0
    rejections: list[Rejection] = field(default_factory=list)
    acronym_pairs: int = 0
    warnings: list[str] = field(default_factory=list)
    error: str | None = None


@dataclass
class RunSummary:
    mode: str
    documents: int = 0
    documents_failed: list[str] = field(default_factory=list)
    mentions: int = 0
    candidates: int = 0
    candidates_rejected: int = 0
    acronym_pairs: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        lookups = self.cache_hits + self.cache_misses
        return {
            "mode": self.mode,
            "documents": self.documents,
            "documents_failed": sorted(self.documents_failed),
            "mentions": self.mentions,
            "candidates": self.candidates,
            "candidates_rejected": self.candidates_rejected,
            "acronym_pairs": self.acronym_pairs,
            "umls_cache": {
                "hits": self.cache_hits,
                "misses": self.cache_misses,
                "hit_rate": self.cache_hits / lookups if lookups else None,
            },
            "warnings": self.warnings,
        }


def build_services(
    config: PipelineConfig,
    pack: InstructionPack | None = None,
    on_service_warning: Callable[[str], None] | None = None,
) -> Services:
    if pack is None:
        pack = load_instruction_pack(config.llm.instruction_pack, config.training_corpus)
    examples = {
        category: pack.examples_for(category, config.llm.examples_per_category)
        for category in Category
    }

    if config.llm.replay:
        adapter: llm.LlmAdapter = llm.ReplayLlmAdapter.from_jsonl(config.llm.replay)
    elif config.llm.endpoint:
        adapter = llm.HttpLlmAdapter(
            endpoint=config.llm.endpoint,
            prompt_field=config.llm.prompt_field,
            response_path=config.llm.response_path,
            retries=config.llm.retries,
            timeout=config.llm.timeout,
            max_inflight=config.llm.max_inflight,
        )
    else:
        raise ValueError("no LLM endpoint or replay fixture configured")

    ner: ner_client.NerClient | None = None
    if config.ner.replay:
        ner = ner_client.ReplayNerClient.from_jsonl(config.ner.replay)
    elif config.ner.endpoint:
        ner = ner_client.HttpNerClient(config.ner.endpoint, timeout=config.ner.timeout)

    mode = config.resolution_mode
    classifier: UmlsClassifier | None = None
    if mode is ResolutionMode.UMLS_AGREEMENT:
        mapping = (
            CategoryMapping.from_json_file(config.umls.mapping_path)
            if config.umls.mapping_path
            else CategoryMapping()
        )
        cache = TermCache(config.umls.cache_path, umls_version=config.umls.version)
        client = None
        if not config.umls.offline:
            client = UmlsClient(
                base_url=config.umls.base_url,
                page_size=config.umls.page_size,
                rate_limiter=TokenBucket(rate=config.umls.rate_limit_rps),
            )
        classifier = UmlsClassifier(
            cache=cache, mapping=mapping, client=client, on_warning=on_service_warning
        )

    return Services(
        instructions=pack.instructions,
        examples=examples,
        prompt_config=PromptConfig(
            examples_per_category=config.llm.examples_per_category,
            max_resamples=config.llm.max_resamples,
            params=config.llm.params,
        ),
        llm_adapter=adapter,
        ner=ner,
        ner_on_error=config.ner.on_error,
        classifier=classifier,
        mode=mode,
    )


def merge_candidates(*groups: Sequence[CandidateSurface]) -> list[CandidateSurface]:
    """Union candidate groups by case-folded surface (categories and sources unioned)."""
    merged: dict[str, CandidateSurface] = {}
    for group in groups:
        for candidate in group:
            key = candidate.surface.casefold()
            existing = merged.get(key)
            if existing is None:
                merged[key] = CandidateSurface(
                    candidate.surface,
                    set(candidate.proposed_categories),
                    set(candidate.sources),
                )
            else:
                existing.proposed_categories.update(candidate.proposed_categories)
                existing.sources.update(candidate.sources)
    return list(merged.values())


def predict_document(
    doc: Document, services: Services
) -> tuple[AnnotatedDocument, DocumentReport]:
    report = DocumentReport(doc_id=doc.doc_id)
    warn = report.warnings.append

    llm_candidates = llm.generate_llm_candidates(
        doc,
        services.llm_adapter,
        services.instructions,
        services.examples,
        services.prompt_config,
        on_warning=warn,
    )
    ner_candidates: list[CandidateSurface] = []
    if services.ner is not None:
        try:
            ner_candidates = ner_client.fetch_ner_candidates(doc, services.ner, on_warning=warn)
        except ner_client.ServiceUnreachable as exc:
            if services.ner_on_error == "abort":
                raise
            warn(f"{doc.doc_id}: NER service unavailable, continuing LLM-only ({exc})")
    candidates = merge_candidates(llm_candidates, ner_candidates)
    report.candidates = len(candidates)

    umls_by_surface: dict[str, list[Category]] | None = None
    if services.mode is ResolutionMode.UMLS_AGREEMENT:
        assert services.classifier is not None
        umls_by_surface = {
            c.surface.casefold(): services.classifier.classify(c.surface)
            for c in candidates
        }
    resolved, rejections = resolver.resolve_candidates(
        candidates, umls_by_surface, services.mode
    )

    pairs = abbrev.detect_abbreviations(doc.text)
    report.acronym_pairs = len(pairs)
    resolved = resolver.propagate_acronyms(resolved, pairs, doc.text)

    annotated, dropped = resolver.assemble(doc, resolved, on_warning=warn)
    report.rejections = rejections + dropped
    report.mentions = len(annotated.mentions)
    return annotated, report


def run_predict(
    config: PipelineConfig,
    input_dir: str | Path,
    output_dir: str | Path,
    pack: InstructionPack | None = None,
) -> RunSummary:
    """Predict every document in input_dir, writing standoff files to output_dir.

    Per-document failures are recorded in the summary and skipped.  The
    run summary and a rejection-diagnostics JSONL are written next to the
    output directory (``<output>.summary.json``, ``<output>.diagnostics.jsonl``).
    """
    output_dir = Path(output_dir)
    docs = load_corpus(input_dir)
    summary = RunSummary(mode=config.mode)
    summary.documents = len(docs)
    reports: dict[str, DocumentReport] = {}
    lock = threading.Lock()
    service_warnings: list[str] = []

    def collect_service_warning(message: str) -> None:
        with lock:
            service_warnings.append(message)

    services = build_services(config, pack, on_service_warning=collect_service_warning)

    def process(doc: AnnotatedDocument) -> None:
        try:
            if not doc.text:
                raise ValueError("document text is empty")
            annotated, report = predict_document(doc.document, services)
            write_annotated(annotated, output_dir)
        except Exception as exc:  # per-document isolation
            log.exception("document %s failed", doc.doc_id)
            report = DocumentReport(doc_id=doc.doc_id, error=f"{type(exc).__name__}: {exc}")
        with lock:
            reports[doc.doc_id] = report

    output_dir.mkdir(parents=True, exist_ok=True)
    if config.workers == 1:
        for doc in docs:
            process(doc)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(process, docs))

    diagnostics_path = output_dir.parent / f"{output_dir.name}.diagnostics.jsonl"
    with open(diagnostics_path, "w", encoding="utf-8") as handle:
        for doc_id in sorted(reports):
            report = reports[doc_id]
            summary.mentions += report.mentions
            summary.candidates += report.candidates
            summary.candidates_rejected += len(report.rejections)
            summary.acronym_pairs += report.acronym_pairs
            summary.warnings.extend(report.warnings)
            if report.error is not None:
                summary.documents_failed.append(doc_id)
                summary.warnings.append(f"{doc_id}: failed ({report.error})")
            for rejection in report.rejections:
                handle.write(
                    json.dumps(
                        {
                            "doc_id": doc_id,
                            "surface": rejection.surface,
                            "reason": rejection.reason,
                            "proposed": [c.value for c in rejection.proposed],
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    # service-level warnings arrive in thread order; sort for determinism
    summary.warnings.extend(sorted(set(service_warnings)))
    if services.classifier is not None:
        summary.cache_hits = services.classifier.hits
        summary.cache_misses = services.classifier.misses

    summary_path = output_dir.parent / f"{output_dir.name}.summary.json"
    summary_path.write_text(
        json.dumps(summary.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    return summary


def warm_cache(config: PipelineConfig, terms: Sequence[str]) -> tuple[int, int, list[str]]:
    """Classify each term once to populate the cache.

    Returns (ok_count, failed_count, error_messages).  Idempotent: cached
    terms cost no network call.
    """
    mapping = (
        CategoryMapping.from_json_file(config.umls.mapping_path)
        if config.umls.mapping_path
        else CategoryMapping()
    )
    cache = TermCache(config.umls.cache_path, umls_version=config.umls.version)
    client = None
    if not config.umls.offline:
        client = UmlsClient(
            base_url=config.umls.base_url,
            page_size=config.umls.page_size,
            rate_limiter=TokenBucket(rate=config.umls.rate_limit_rps),
        )
    classifier = UmlsClassifier(cache=cache, mapping=mapping, client=client)
    ok = 0
    errors: list[str] = []
    for term in terms:
        term = term.strip()
        if not term:
            continue
        try:
            classifier.classify(term)
            ok += 1
        except Exception as exc:
            errors.append(f"{term!r}: {type(exc).__name__}: {exc}")
    return ok, len(errors), errors
