"""Final entity resolution: category assignment, grounding, acronym propagation.

Two modes:

* agreement -- a candidate is accepted only when the UMLS classification
  and the proposing source agree; the final category is the first
  UMLS-derived category that the sources also proposed.
* priority -- no UMLS; multi-category candidates are settled by a fixed
  category priority order.

Resolved surfaces are grounded to every case-insensitive occurrence in
the document text, producing nested/overlapping mentions freely.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

from .abbrev import AbbreviationPair
from .corpus import AnnotatedDocument, Category, Document, Mention, Span, emit_order
from .llm import CandidateSurface

log = logging.getLogger(__name__)

PRIORITY_ORDER: tuple[Category, ...] = (
    Category.INJURY_POISONING,
    Category.ANATOMY,
    Category.PHYS,
    Category.DISO,
    Category.CHEM,
    Category.LABPROC,
    Category.DEVICE,
    Category.FINDING,
)

REASON_NO_UMLS_RESULT = "no_umls_result"
REASON_NO_AGREEMENT = "no_agreement"
REASON_NO_OCCURRENCE = "no_occurrence"


class ResolutionMode(Enum):
    UMLS_AGREEMENT = "umls"
    PRIORITY_ORDER = "priority"


@dataclass(frozen=True)
class Provenance:
    sources: frozenset[str]
    umls_first_category: Category | None = None
    priority_rank: int | None = None
    via_acronym: bool = False


@dataclass(frozen=True)
class ResolvedEntity:
    surface: str
    category: Category
    provenance: Provenance


@dataclass(frozen=True)
class Rejection:
    surface: str
    reason: str
    proposed: tuple[Category, ...] = ()


def resolve(
    candidate: CandidateSurface,
    umls_categories: Sequence[Category] | None,
    mode: ResolutionMode,
) -> ResolvedEntity | None:
    """Resolve one candidate to a final category, or None if rejected.

    Agreement mode: the first UMLS category also in the proposed set wins;
    empty UMLS result or empty intersection rejects.  Priority mode: the
    highest-priority proposed category wins; never rejects.
    """
    if mode is ResolutionMode.PRIORITY_ORDER:
        rank, category = min(
            (PRIORITY_ORDER.index(c), c) for c in candidate.proposed_categories
        )
        return ResolvedEntity(
            surface=candidate.surface,
            category=category,
            provenance=Provenance(frozenset(candidate.sources), priority_rank=rank),
        )
    if not umls_categories:
        return None
    for category in umls_categories:
        if category in candidate.proposed_categories:
            return ResolvedEntity(
                surface=candidate.surface,
                category=category,
                provenance=Provenance(
                    frozenset(candidate.sources), umls_first_category=umls_categories[0]
                ),
            )
    return None


def resolve_candidates(
    candidates: Sequence[CandidateSurface],
    umls_categories_by_surface: Mapping[str, Sequence[Category]] | None,
    mode: ResolutionMode,
) -> tuple[list[ResolvedEntity], list[Rejection]]:
    """Resolve a document's candidates, collecting rejections with reasons.

    ``umls_categories_by_surface`` is keyed by case-folded surface and is
    required in agreement mode.
    """
    resolved: list[ResolvedEntity] = []
    rejections: list[Rejection] = []
    for candidate in candidates:
        umls_categories: Sequence[Category] | None = None
        if mode is ResolutionMode.UMLS_AGREEMENT:
            if umls_categories_by_surface is None:
                raise ValueError("agreement mode requires UMLS classifications")
            umls_categories = umls_categories_by_surface.get(candidate.surface.casefold(), [])
        entity = resolve(candidate, umls_categories, mode)
        if entity is not None:
            resolved.append(entity)
            continue
        proposed = tuple(sorted(candidate.proposed_categories, key=lambda c: c.value))
        reason = REASON_NO_UMLS_RESULT if not umls_categories else REASON_NO_AGREEMENT
        rejections.append(Rejection(candidate.surface, reason, proposed))
    return resolved, rejections


def ground_surface(text: str, surface: str) -> list[Span]:
    """All case-insensitive, non-overlapping occurrences, left to right."""
    if not surface:
        raise ValueError("surface must be non-empty")
    pattern = re.compile(re.escape(surface), re.IGNORECASE)
    return [Span(m.start(), m.end()) for m in pattern.finditer(text)]


def propagate_acronyms(
    resolved: Sequence[ResolvedEntity],
    pairs: Sequence[AbbreviationPair],
    text: str,
) -> list[ResolvedEntity]:
    """Extend the resolved list with short forms of resolved long forms.

    A short form inherits the category of its long form's resolution
    unless the short form already resolved on its own; existing entities
    are never removed or re-categorized.
    """
    by_surface = {entity.surface.casefold(): entity for entity in resolved}
    out = list(resolved)
    for pair in pairs:
        if pair.long_span.slice(text) != pair.long_form:
            log.warning("abbreviation pair %r does not belong to this text; skipped",
                        pair.short_form)
            continue
        short_key = pair.short_form.casefold()
        if short_key in by_surface:
            continue
        source = by_surface.get(pair.long_form.casefold())
        if source is None:
            continue
        prov = source.provenance
        entity = ResolvedEntity(
            surface=pair.short_form,
            category=source.category,
            provenance=Provenance(
                sources=prov.sources,
                umls_first_category=prov.umls_first_category,
                priority_rank=prov.priority_rank,
                via_acronym=True,
            ),
        )
        out.append(entity)
        by_surface[short_key] = entity
    return out


def assemble(
    doc: Document,
    entities: Sequence[ResolvedEntity],
    on_warning: Callable[[str], None] | None = None,
) -> tuple[AnnotatedDocument, list[Rejection]]:
    """Ground every entity and build the final annotated document.

    One mention per occurrence, identical (span, category) pairs
    deduplicated, ids renumbered in emission order.  Entities whose
    surface never occurs are reported as no_occurrence rejections.
    """
    seen: dict[tuple[int, int, Category], Mention] = {}
    rejections: list[Rejection] = []
    for entity in entities:
        spans = ground_surface(doc.text, entity.surface)
        if not spans:
            message = f"{doc.doc_id}: surface {entity.surface!r} has no occurrence in text"
            log.warning(message)
            if on_warning is not None:
                on_warning(message)
            rejections.append(
                Rejection(entity.surface, REASON_NO_OCCURRENCE, (entity.category,))
            )
            continue
        for span in spans:
            key = (span.start, span.end, entity.category)
            if key not in seen:
                seen[key] = Mention(
                    category=entity.category, span=span, surface=span.slice(doc.text)
                )
    ordered = sorted(seen.values(), key=emit_order)
    mentions = [
        Mention(category=m.category, span=m.span, surface=m.surface, id=f"T{i}")
        for i, m in enumerate(ordered, start=1)
    ]
    return AnnotatedDocument(document=doc, mentions=mentions), rejections
