"""Client for the external biomedical NER service.

The service contract is ``POST <endpoint>/ner`` with ``{"doc_id", "text"}``
returning ``{"entities": [{"start", "end", "label"}]}``.  DISEASE and
CHEMICAL labels become DISO/CHEM candidate surfaces; anything else is
skipped with a warning.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import requests

from .corpus import Category, Document
from .llm import SOURCE_NER, CandidateSurface

log = logging.getLogger(__name__)

LABEL_TO_CATEGORY = {
    "DISEASE": Category.DISO,
    "CHEMICAL": Category.CHEM,
}


class ServiceUnreachable(Exception):
    pass


class MalformedResponse(Exception):
    pass


@dataclass(frozen=True)
class NerServiceEntity:
    start: int
    end: int
    label: str


class NerClient(Protocol):
    def entities(self, doc: Document) -> list[NerServiceEntity]:
        ...


class HttpNerClient:
    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.session = session or requests.Session()

    def entities(self, doc: Document) -> list[NerServiceEntity]:
        try:
            response = self.session.post(
                f"{self.endpoint}/ner",
                json={"doc_id": doc.doc_id, "text": doc.text},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ServiceUnreachable(f"NER service at {self.endpoint} unreachable: {exc}") from exc
        if response.status_code != 200:
            raise ServiceUnreachable(
                f"NER service at {self.endpoint} returned HTTP {response.status_code}"
            )
        try:
            payload = response.json()
            return [
                NerServiceEntity(int(e["start"]), int(e["end"]), str(e["label"]))
                for e in payload["entities"]
            ]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedResponse(f"cannot parse NER response: {exc}") from exc


class ReplayNerClient:
    """Recorded responses keyed by doc_id: JSON lines of
    ``{"doc_id", "entities": [...]}``.  Documents without a record yield
    no entities (logged)."""

    def __init__(self, records: dict[str, list[NerServiceEntity]]) -> None:
        self._records = dict(records)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ReplayNerClient":
        records: dict[str, list[NerServiceEntity]] = {}
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                entry = json.loads(line)
                records[entry["doc_id"]] = [
                    NerServiceEntity(int(e["start"]), int(e["end"]), str(e["label"]))
                    for e in entry["entities"]
                ]
        return cls(records)

    def entities(self, doc: Document) -> list[NerServiceEntity]:
        if doc.doc_id not in self._records:
            log.info("no recorded NER entities for %s", doc.doc_id)
            return []
        return list(self._records[doc.doc_id])


def fetch_ner_candidates(
    doc: Document,
    client: NerClient,
    on_warning: Callable[[str], None] | None = None,
) -> list[CandidateSurface]:
    """Fetch service entities and convert them to DISO/CHEM candidates.

    Surfaces are taken from the document text at the reported offsets and
    merged by case-folded surface.
    """

    def warn(message: str) -> None:
        log.warning(message)
        if on_warning is not None:
            on_warning(message)

    merged: dict[str, CandidateSurface] = {}
    for entity in client.entities(doc):
        if not (0 <= entity.start < entity.end <= len(doc.text)):
            raise MalformedResponse(
                f"{doc.doc_id}: entity offsets ({entity.start}, {entity.end}) out of range"
            )
        category = LABEL_TO_CATEGORY.get(entity.label)
        if category is None:
            warn(f"{doc.doc_id}: skipping NER entity with unmapped label {entity.label!r}")
            continue
        surface = doc.text[entity.start:entity.end]
        key = surface.casefold()
        candidate = merged.get(key)
        if candidate is None:
            merged[key] = CandidateSurface(surface, {category}, {SOURCE_NER})
        else:
            candidate.proposed_categories.add(category)
    return list(merged.values())
