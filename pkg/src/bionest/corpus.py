"""Document/mention data model and BRAT standoff parsing and emission.

A corpus is a flat directory of ``<doc_id>.txt`` abstracts paired with
``<doc_id>.ann`` standoff files.  Entity lines follow the grammar

    T<digits> TAB <CATEGORY> SP <start> SP <end> TAB <surface>

with character offsets counted in Unicode code points (0-based, end
exclusive).  Non-entity lines (relations, attributes, notes) are skipped.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

log = logging.getLogger(__name__)


class Category(Enum):
    """The eight nested-entity categories of the BioNNE annotation scheme."""

    DISO = "DISO"
    CHEM = "CHEM"
    ANATOMY = "ANATOMY"
    LABPROC = "LABPROC"
    INJURY_POISONING = "INJURY_POISONING"
    DEVICE = "DEVICE"
    PHYS = "PHYS"
    FINDING = "FINDING"

    @classmethod
    def parse(cls, label: str) -> "Category":
        try:
            return cls[label]
        except KeyError:
            raise UnknownCategory(f"unknown entity category {label!r}") from None

    def __str__(self) -> str:
        return self.value


class BratError(ValueError):
    """Base class for standoff parsing/emission failures."""


class UnknownCategory(BratError):
    pass


class SpanOutOfRange(BratError):
    pass


class SurfaceMismatch(BratError):
    pass


class MalformedLine(BratError):
    pass


class InvariantViolation(BratError):
    pass


@dataclass(frozen=True, order=True)
class Span:
    """Half-open character interval [start, end) into a document text."""

    start: int
    end: int

    def slice(self, text: str) -> str:
        return text[self.start:self.end]


@dataclass(frozen=True)
class Mention:
    category: Category
    span: Span
    surface: str
    id: str | None = None
    # Set for discontinuous standoff spans; such mentions are accepted on
    # parse (overall min-start/max-end) but are never emitted.
    discontinuous: bool = False


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str


@dataclass
class AnnotatedDocument:
    document: Document
    mentions: list[Mention] = field(default_factory=list)

    @property
    def doc_id(self) -> str:
        return self.document.doc_id

    @property
    def text(self) -> str:
        return self.document.text


_ENTITY_LINE_RE = re.compile(r"^(T\d+)\t([^\t]+)\t(.*)$")
_TYPE_SPAN_RE = re.compile(r"^(\S+) (\d+) (\d+)((?:;\d+ \d+)*)$")


def parse_document(doc_id: str, txt_content: str, ann_content: str) -> AnnotatedDocument:
    """Parse one abstract plus its standoff annotations.

    Only T-lines are interpreted; R/A/#/E/N lines are skipped.  Every
    mention's stated surface is verified against the text slice.
    """
    document = Document(doc_id=doc_id, text=txt_content)
    mentions: list[Mention] = []
    seen_ids: set[str] = set()
    for raw in ann_content.splitlines():
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if not line.startswith("T"):
            log.debug("%s: skipping non-entity line %r", doc_id, line)
            continue
        m = _ENTITY_LINE_RE.match(line)
        if m is None:
            raise MalformedLine(f"cannot parse entity line {line!r}")
        ann_id, middle, surface = m.groups()
        if ann_id in seen_ids:
            raise MalformedLine(f"duplicate annotation id {ann_id!r}")
        seen_ids.add(ann_id)
        tm = _TYPE_SPAN_RE.match(middle)
        if tm is None:
            raise MalformedLine(f"cannot parse type/offset field {middle!r}")
        label, start_s, end_s, extra = tm.groups()
        category = Category.parse(label)
        fragments = [(int(start_s), int(end_s))]
        for frag in extra.split(";"):
            if frag:
                fs, fe = frag.split(" ")
                fragments.append((int(fs), int(fe)))
        for fs, fe in fragments:
            if not (0 <= fs < fe <= len(txt_content)):
                raise SpanOutOfRange(
                    f"{ann_id}: span ({fs}, {fe}) invalid for text of length {len(txt_content)}"
                )
        expected = " ".join(txt_content[fs:fe] for fs, fe in fragments)
        if expected != surface:
            raise SurfaceMismatch(
                f"{ann_id}: stated surface {surface!r} != text slice {expected!r}"
            )
        span = Span(min(fs for fs, _ in fragments), max(fe for _, fe in fragments))
        mentions.append(
            Mention(
                category=category,
                span=span,
                surface=surface,
                id=ann_id,
                discontinuous=len(fragments) > 1,
            )
        )
    return AnnotatedDocument(document=document, mentions=mentions)


def _check_mention(mention: Mention, text: str) -> None:
    if mention.discontinuous:
        raise InvariantViolation(
            f"discontinuous mention {mention.surface!r} cannot be emitted"
        )
    if not (0 <= mention.span.start < mention.span.end <= len(text)):
        raise InvariantViolation(f"span {mention.span} out of range")
    if mention.span.slice(text) != mention.surface:
        raise InvariantViolation(
            f"surface {mention.surface!r} != slice {mention.span.slice(text)!r}"
        )


def emit_order(mention: Mention) -> tuple[int, int, str]:
    return (mention.span.start, mention.span.end, mention.category.value)


def emit_brat(doc: AnnotatedDocument) -> str:
    """Serialize mentions as standoff entity lines.

    Mentions are ordered by (start, end, category name) and renumbered
    T1..Tn in that order, so any permutation of the same mention set
    emits byte-identical output.
    """
    for mention in doc.mentions:
        _check_mention(mention, doc.text)
    lines = []
    for i, mention in enumerate(sorted(doc.mentions, key=emit_order), start=1):
        lines.append(
            f"T{i}\t{mention.category.value} {mention.span.start} {mention.span.end}"
            f"\t{mention.surface}\n"
        )
    return "".join(lines)


def load_corpus(directory: str | Path) -> list[AnnotatedDocument]:
    """Load all <doc_id>.txt (+ optional <doc_id>.ann) pairs, sorted by doc_id.

    A missing .ann file yields a document with zero mentions, so
    prediction-only input directories load cleanly.
    """
    directory = Path(directory)
    docs = []
    for txt_path in sorted(directory.glob("*.txt"), key=lambda p: p.stem):
        doc_id = txt_path.stem
        text = txt_path.read_text(encoding="utf-8")
        ann_path = txt_path.with_suffix(".ann")
        ann = ann_path.read_text(encoding="utf-8") if ann_path.exists() else ""
        try:
            docs.append(parse_document(doc_id, text, ann))
        except BratError as exc:
            raise type(exc)(f"{doc_id}: {exc}") from exc
    return docs


def write_annotated(doc: AnnotatedDocument, directory: str | Path, write_text: bool = True) -> Path:
    """Write <doc_id>.ann (and by default <doc_id>.txt) into a corpus directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ann_path = directory / f"{doc.doc_id}.ann"
    ann_path.write_text(emit_brat(doc), encoding="utf-8", newline="\n")
    if write_text:
        (directory / f"{doc.doc_id}.txt").write_text(doc.text, encoding="utf-8", newline="\n")
    return ann_path
