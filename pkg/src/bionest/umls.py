"""UMLS concept lookup, semantic-tree classification, and persistent caching.

Terms are searched via the REST ``/search/current`` endpoint (top 5 CUIs in
rank order); each CUI's semantic types are fetched via
``/content/current/CUI/{cui}``, resolving the dotted tree id through the
semantic-type URI when it is not inline.  Tree ids map to entity
categories by subtree prefix.  All lookups are cached to a JSON-lines file
keyed by (case-folded term, UMLS version).
"""
from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import requests

from .corpus import Category

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://uts-ws.nlm.nih.gov/rest"
DEFAULT_UMLS_VERSION = "2023AB"
API_KEY_ENV = "UMLS_API_KEY"
PAGE_SIZE = 5

_TREE_ID_RE = re.compile(r"^[A-Z]\d+(?:\.\d+)*$")


class UmlsError(Exception):
    """Base class for UMLS lookup failures."""


class AuthError(UmlsError):
    pass


class RateLimited(UmlsError):
    pass


class TransportError(UmlsError):
    pass


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class CuiResult:
    cui: str
    name: str
    rank: int  # 1-based position in search results


@dataclass(frozen=True)
class SemanticTypeRecord:
    type_name: str
    tree_id: str


@dataclass
class TermRecord:
    term: str  # case-folded query string
    cuis: list[tuple[CuiResult, list[SemanticTypeRecord]]]
    fetched_at: str
    umls_version: str

    def to_dict(self) -> dict:
        return {
            "term": self.term,
            "umls_version": self.umls_version,
            "fetched_at": self.fetched_at,
            "cuis": [
                {
                    "cui": cui.cui,
                    "name": cui.name,
                    "rank": cui.rank,
                    "semantic_types": [
                        {"type_name": st.type_name, "tree_id": st.tree_id}
                        for st in types
                    ],
                }
                for cui, types in self.cuis
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TermRecord":
        cuis = []
        for entry in data["cuis"]:
            cui = CuiResult(cui=entry["cui"], name=entry["name"], rank=int(entry["rank"]))
            types = [
                SemanticTypeRecord(type_name=st["type_name"], tree_id=st["tree_id"])
                for st in entry["semantic_types"]
            ]
            cuis.append((cui, types))
        return cls(
            term=data["term"],
            cuis=cuis,
            fetched_at=data.get("fetched_at", ""),
            umls_version=data["umls_version"],
        )


DEFAULT_MAPPING_ROWS: tuple[tuple[str, Category], ...] = (
    ("B2.2.1.2", Category.DISO),
    ("A1.4.1", Category.CHEM),
    ("A1.2", Category.ANATOMY),
    ("A2.1.5.2", Category.ANATOMY),
    ("B1.3.1.1", Category.LABPROC),
    ("B1.3.1.2", Category.LABPROC),
    ("B2.3", Category.INJURY_POISONING),
    ("A1.3.1", Category.DEVICE),
    ("B2.2.1.1", Category.PHYS),
    ("A2.2", Category.FINDING),
)


@dataclass(frozen=True)
class CategoryMapping:
    """Ordered (tree-id prefix, category) table; matching is by subtree."""

    rows: tuple[tuple[str, Category], ...] = DEFAULT_MAPPING_ROWS

    def __post_init__(self) -> None:
        for prefix, _ in self.rows:
            if not _TREE_ID_RE.match(prefix):
                raise MappingError(f"malformed tree id prefix {prefix!r}")
        for i, (a, _) in enumerate(self.rows):
            for b, _ in self.rows[i + 1:]:
                if a == b or b.startswith(a + ".") or a.startswith(b + "."):
                    raise MappingError(f"mapping prefixes {a!r} and {b!r} overlap")

    @classmethod
    def from_json_file(cls, path: str | Path) -> "CategoryMapping":
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tuple((prefix, Category.parse(label)) for prefix, label in rows))

    def category_for(self, tree_id: str) -> Category | None:
        for prefix, category in self.rows:
            if tree_id == prefix or tree_id.startswith(prefix + "."):
                return category
        return None


def tree_to_category(tree_id: str, mapping: CategoryMapping) -> Category | None:
    """Map a dotted semantic-tree id to a category by unique prefix, or None."""
    return mapping.category_for(tree_id)


def categories_from_record(record: TermRecord, mapping: CategoryMapping) -> list[Category]:
    """Distinct categories in first-seen order over CUIs (by rank) and their types."""
    seen: list[Category] = []
    for _, types in record.cuis:
        for st in types:
            category = mapping.category_for(st.tree_id)
            if category is not None and category not in seen:
                seen.append(category)
    return seen


class TokenBucket:
    """Blocking token-bucket rate limiter (default 5 requests/second)."""

    def __init__(
        self,
        rate: float = 5.0,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class TermCache:
    """Persistent JSON-lines cache of TermRecords, last-write-wins.

    The file is append-only; corrupt lines are skipped with a warning at
    load.  Keys are (case-folded term, UMLS version), so bumping the
    version invalidates old entries without touching the file.
    """

    def __init__(self, path: str | Path | None, umls_version: str = DEFAULT_UMLS_VERSION) -> None:
        self.path = Path(path) if path is not None else None
        self.umls_version = umls_version
        self._records: dict[tuple[str, str], TermRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = TermRecord.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    log.warning("%s:%d: skipping corrupt cache record (%s)", self.path, lineno, exc)
                    continue
                self._records[(record.term, record.umls_version)] = record

    def get(self, term: str) -> TermRecord | None:
        with self._lock:
            return self._records.get((term.casefold(), self.umls_version))

    def put(self, record: TermRecord) -> None:
        with self._lock:
            self._records[(record.term, record.umls_version)] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as handle:
                    handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")

    def compact(self) -> int:
        """Rewrite the cache file with one line per live key. Returns record count."""
        with self._lock:
            if self.path is None:
                return len(self._records)
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with open(tmp, "w", encoding="utf-8") as handle:
                for record in self._records.values():
                    handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
            tmp.replace(self.path)
            return len(self._records)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)


class UmlsClient:
    """Thin REST client for term search and semantic-type resolution."""

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        api_key: str | None = None,
        page_size: int = PAGE_SIZE,
        rate_limiter: TokenBucket | None = None,
        session: requests.Session | None = None,
        timeout: float = 30.0,
        max_429_retries: int = 3,
        backoff: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.page_size = page_size
        self.rate_limiter = rate_limiter or TokenBucket()
        self.session = session or requests.Session()
        self.timeout = timeout
        self.max_429_retries = max_429_retries
        self.backoff = backoff
        self._sleep = sleep

    def _get(self, url: str, params: dict | None = None) -> dict | None:
        """GET a JSON payload; returns None on 404 (absent/retired resource)."""
        params = dict(params or {})
        if self.api_key:
            params["apiKey"] = self.api_key
        attempt = 0
        while True:
            self.rate_limiter.acquire()
            try:
                response = self.session.get(url, params=params, timeout=self.timeout)
            except requests.RequestException as exc:
                raise TransportError(f"GET {url} failed: {exc}") from exc
            if response.status_code == 200:
                try:
                    return response.json()
                except ValueError as exc:
                    raise TransportError(f"GET {url}: non-JSON response") from exc
            if response.status_code == 404:
                return None
            if response.status_code in (401, 403):
                raise AuthError(f"GET {url}: HTTP {response.status_code} (check {API_KEY_ENV})")
            if response.status_code == 429:
                if attempt >= self.max_429_retries:
                    raise RateLimited(f"GET {url}: still throttled after {attempt} retries")
                self._sleep(self.backoff * 2**attempt)
                attempt += 1
                continue
            raise TransportError(f"GET {url}: HTTP {response.status_code}")

    def search_term(self, term: str) -> list[CuiResult]:
        """Top page_size concepts for a term, in API rank order."""
        term = term.strip()
        if not term:
            raise ValueError("search term must be non-empty")
        data = self._get(
            f"{self.base_url}/search/current",
            params={"string": term, "pageSize": self.page_size},
        )
        if data is None:
            return []
        results = []
        for entry in data.get("result", {}).get("results", []):
            cui = entry.get("ui")
            if not cui or cui == "NONE":  # API sentinel for an empty result page
                continue
            results.append(CuiResult(cui=cui, name=entry.get("name", ""), rank=len(results) + 1))
            if len(results) >= self.page_size:
                break
        return results

    def fetch_semantic_trees(self, cui: str) -> list[SemanticTypeRecord]:
        """All semantic types of a CUI with resolved tree ids, API order preserved.

        Retired/absent CUIs yield an empty list with a warning.
        """
        data = self._get(f"{self.base_url}/content/current/CUI/{cui}")
        if data is None:
            log.warning("CUI %s not found (retired?); treating as no semantic types", cui)
            return []
        records = []
        for st in data.get("result", {}).get("semanticTypes", []):
            name = st.get("name", "")
            tree_id = st.get("treeNumber")
            if not tree_id and st.get("uri"):
                tree_id = self._tree_id_from_uri(st["uri"])
            if not tree_id:
                log.warning("CUI %s: semantic type %r has no resolvable tree id", cui, name)
                continue
            records.append(SemanticTypeRecord(type_name=name, tree_id=tree_id))
        return records

    def _tree_id_from_uri(self, uri: str) -> str | None:
        data = self._get(uri)
        if data is None:
            return None
        return data.get("result", {}).get("treeNumber")

    def fetch_term_record(self, term: str, umls_version: str = DEFAULT_UMLS_VERSION) -> TermRecord:
        cuis = []
        for cui in self.search_term(term):
            cuis.append((cui, self.fetch_semantic_trees(cui.cui)))
        return TermRecord(
            term=term.casefold(),
            cuis=cuis,
            fetched_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            umls_version=umls_version,
        )


class UmlsClassifier:
    """Cached term -> ordered category list classification.

    With no client configured the classifier is offline: cache misses
    classify as empty with a warning and never touch the network.
    Concurrent lookups of the same term are deduplicated to one fetch.
    """

    def __init__(
        self,
        cache: TermCache,
        mapping: CategoryMapping | None = None,
        client: UmlsClient | None = None,
        on_warning: Callable[[str], None] | None = None,
    ) -> None:
        self.cache = cache
        self.mapping = mapping or CategoryMapping()
        self.client = client
        self._on_warning = on_warning
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}
        self.hits = 0
        self.misses = 0

    def _warn(self, message: str) -> None:
        log.warning(message)
        if self._on_warning is not None:
            self._on_warning(message)

    def classify(self, term: str) -> list[Category]:
        key = term.strip().casefold()
        if not key:
            raise ValueError("term must be non-empty")
        while True:
            with self._lock:
                record = self.cache.get(key)
                if record is not None:
                    self.hits += 1
                    return categories_from_record(record, self.mapping)
                if self.client is None:
                    self.misses += 1
                    self._warn(f"term {key!r} not cached and no UMLS client configured")
                    return []
                event = self._inflight.get(key)
                if event is None:
                    event = threading.Event()
                    self._inflight[key] = event
                    self.misses += 1
                    break
            # Another thread is fetching this term; wait and re-check the cache.
            event.wait()
        try:
            record = self.client.fetch_term_record(key, self.cache.umls_version)
            self.cache.put(record)
        finally:
            with self._lock:
                self._inflight.pop(key, None)
            event.set()
        return categories_from_record(record, self.mapping)
