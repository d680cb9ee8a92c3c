"""NER model backends.

Two interchangeable backends sit behind the HTTP service:

* ``SpacyNerModel`` loads an installed spaCy pipeline (default
  ``en_ner_bc5cdr_md``, which labels DISEASE and CHEMICAL entities).
* ``LexiconNerModel`` matches a recorded term -> label lexicon; it keeps
  the service and its tests deterministic and dependency-free where the
  spaCy model cannot be installed.

The backend is chosen by the NER_MODEL environment variable: a spaCy
package name, or ``lexicon:/path/to/lexicon.json``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol


@dataclass(frozen=True)
class Entity:
    start: int
    end: int
    label: str


class NerModel(Protocol):
    name: str

    def entities(self, text: str) -> list[Entity]:
        ...


class SpacyNerModel:
    def __init__(self, name: str) -> None:
        import spacy  # deferred: heavyweight and optional

        self.name = name
        self._nlp = spacy.load(name)

    def entities(self, text: str) -> list[Entity]:
        doc = self._nlp(text)
        return [Entity(ent.start_char, ent.end_char, ent.label_) for ent in doc.ents]


class LexiconNerModel:
    """Longest-match, case-insensitive, word-boundary lexicon matcher.

    Lexicon file: JSON ``{"terms": {"pulmonary hypertension": "DISEASE", ...}}``.
    """

    def __init__(self, path: str | Path) -> None:
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        self.name = f"lexicon:{path.name}"
        terms = data["terms"]
        if not terms:
            raise ValueError(f"lexicon {path} has no terms")
        self._labels = {term.casefold(): label for term, label in terms.items()}
        # longest alternatives first so overlapping terms prefer the longest match
        alternatives = sorted((re.escape(t) for t in terms), key=len, reverse=True)
        self._pattern = re.compile(
            r"(?<!\w)(?:" + "|".join(alternatives) + r")(?!\w)", re.IGNORECASE
        )

    def entities(self, text: str) -> list[Entity]:
        found = [
            Entity(m.start(), m.end(), self._labels[m.group(0).casefold()])
            for m in self._pattern.finditer(text)
        ]
        return sorted(found, key=lambda e: (e.start, e.end))


def load_model(spec: str) -> NerModel:
    if spec.startswith("lexicon:"):
        return LexiconNerModel(spec.split(":", 1)[1])
    return SpacyNerModel(spec)
