"""Nested biomedical named-entity extraction pipeline.

Combines LLM few-shot candidate generation, an external biomedical NER
service, and UMLS semantic-type heuristics to categorize entity mentions
in PubMed abstracts, emitting BRAT standoff annotations and scoring them
against gold data.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    AnnotatedDocument,
    Category,
    Document,
    Mention,
    Span,
)
