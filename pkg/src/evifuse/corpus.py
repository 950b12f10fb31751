"""Outcome-specific document index: ingestion, filtering, term statistics."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DuplicateDocumentError, EmptyIndexError, IngestionError, ValidationError
from .text import MeshDictionary


@dataclass
class Document:
    doc_id: str
    title: str
    body: str
    mesh_terms: Counter = field(default_factory=Counter)

    def __post_init__(self):
        if not self.doc_id:
            raise ValidationError("document has an empty doc_id")
        if not isinstance(self.mesh_terms, Counter):
            self.mesh_terms = Counter(self.mesh_terms)

    @property
    def text(self) -> str:
        return f"{self.title}\n{self.body}" if self.title else self.body


@dataclass
class OutcomeSpec:
    """An outcome label space plus the term conjunctions that scope its literature.

    Each conjunction is a set of descriptors that must all be present on a
    document; a document matching any one conjunction is retained (AND
    within, OR across).
    """

    outcome_id: str
    class_count: int
    class_descriptions: list[str]
    mesh_queries: list[list[str]]

    def __post_init__(self):
        if self.class_count < 2:
            raise ValidationError(f"class_count must be >= 2, got {self.class_count}")
        if len(self.class_descriptions) != self.class_count:
            raise ValidationError(
                f"{self.class_count} classes but {len(self.class_descriptions)} descriptions")
        if not self.mesh_queries:
            raise ValidationError("mesh_queries must be non-empty")

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeSpec":
        try:
            return cls(
                outcome_id=d["outcome_id"],
                class_count=int(d["class_count"]),
                class_descriptions=list(d["class_descriptions"]),
                mesh_queries=[list(c) for c in d["mesh_queries"]],
            )
        except KeyError as exc:
            raise ValidationError(f"outcome spec missing field {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "outcome_id": self.outcome_id,
            "class_count": self.class_count,
            "class_descriptions": self.class_descriptions,
            "mesh_queries": self.mesh_queries,
        }

    def matches(self, mesh_terms: Counter) -> bool:
        present = {t.lower() for t in mesh_terms}
        for conjunction in self.mesh_queries:
            if all(term.lower() in present for term in conjunction):
                return True
        return False


@dataclass
class TfidfStats:
    """Per-term document frequencies over an index plus the document count."""

    doc_count: int
    doc_freq: dict[str, int]

    def df(self, term: str) -> int:
        return self.doc_freq.get(term, 0)


@dataclass
class OutcomeIndex:
    outcome_id: str
    documents: dict[str, Document]
    tfidf_stats: TfidfStats
    created_at: int = 0  # epoch seconds; 0 when built by the deterministic pipeline
    format_version: int = 1

    def __len__(self) -> int:
        return len(self.documents)

    def doc_ids(self) -> list[str]:
        return sorted(self.documents)


def extract_mesh(document: Document, dictionary: MeshDictionary) -> Document:
    """Populate mesh_terms with longest-match dictionary hits over title+body.

    Counts reflect the number of surviving mentions, i.e. true term
    frequency in the text, not a binary tag.
    """
    if len(dictionary) == 0:
        raise ValidationError("dictionary is empty")
    counts = dictionary.term_counts(document.title) + dictionary.term_counts(document.body)
    document.mesh_terms = counts
    return document


def compute_tfidf_stats(documents: Iterable[Document]) -> TfidfStats:
    doc_freq: Counter = Counter()
    n = 0
    for doc in documents:
        n += 1
        doc_freq.update(set(doc.mesh_terms))
    return TfidfStats(doc_count=n, doc_freq=dict(doc_freq))


def build_index(corpus: Iterable[Document], spec: OutcomeSpec,
                created_at: int = 0) -> OutcomeIndex:
    """Filter a tagged corpus down to the outcome's scope and compute term stats.

    Every document must already carry mesh_terms (from the ingestion file or
    extract_mesh). Comparison against the outcome's conjunctions is
    case-insensitive.
    """
    retained: dict[str, Document] = {}
    seen: set[str] = set()
    for doc in corpus:
        if doc.doc_id in seen:
            raise DuplicateDocumentError(doc.doc_id)
        seen.add(doc.doc_id)
        if spec.matches(doc.mesh_terms):
            retained[doc.doc_id] = doc
    if not retained:
        raise EmptyIndexError(
            f"no document matched any conjunction for outcome {spec.outcome_id!r}")
    stats = compute_tfidf_stats(retained.values())
    return OutcomeIndex(
        outcome_id=spec.outcome_id,
        documents=retained,
        tfidf_stats=stats,
        created_at=created_at,
    )


def read_corpus_jsonl(path: str | Path,
                      dictionary: MeshDictionary | None = None) -> Iterator[Document]:
    """Stream documents from a JSON-lines corpus file.

    Lines look like {"doc_id":..., "title":..., "body":..., "mesh_terms":[...]}.
    mesh_terms may be a list (multiset as repeats) or a {term: count} map;
    when absent, extract_mesh runs with the supplied dictionary.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "doc_id" not in obj:
                raise IngestionError(f"{path}:{lineno}: document without doc_id")
            doc = Document(
                doc_id=str(obj["doc_id"]),
                title=str(obj.get("title", "")),
                body=str(obj.get("body", "")),
                mesh_terms=_parse_mesh_field(obj.get("mesh_terms")),
            )
            if not doc.mesh_terms:
                if dictionary is None:
                    raise IngestionError(
                        f"{path}:{lineno}: document {doc.doc_id!r} has no mesh_terms "
                        "and no dictionary was provided for extraction")
                extract_mesh(doc, dictionary)
            yield doc


def _parse_mesh_field(raw) -> Counter:
    if raw is None:
        return Counter()
    if isinstance(raw, dict):
        return Counter({str(k): int(v) for k, v in raw.items()})
    return Counter(str(t) for t in raw)
