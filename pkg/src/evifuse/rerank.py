"""Candidate pooling, pair rescoring, and evidence selection.

The rescoring slot accepts any object with a `score_pairs` method; the
builtin lexical scorer keeps the pipeline runnable without an external
model, and a small trainable feature scorer covers the supervised case.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from .corpus import Document, OutcomeIndex
from .errors import ProviderError, ValidationError
from .notes import Query
from .retrieval import AdamState, RankedList, cosine_sparse, dense_score, tfidf_vector

log = logging.getLogger(__name__)


@dataclass
class PairScore:
    doc_id: str
    relevance: float  # in [0, 1]


@dataclass
class EvidenceSet:
    note_id: str
    items: list[tuple[str, float]]  # (doc_id, relevance), relevance non-increasing
    k: int


class PairScorer(Protocol):
    def score_pairs(self, query: Query, docs: Sequence[Document]) -> list[float]:
        """One relevance per document, same order as `docs`."""
        ...


def pool_candidates(sparse: RankedList, dense: RankedList, pool_n: int) -> set[str]:
    """Union of the top-pool_n ids from each first-stage ranking."""
    if pool_n < 1:
        raise ValidationError(f"pool_n must be >= 1, got {pool_n}")
    return set(sparse.top(pool_n)) | set(dense.top(pool_n))


def rerank(query: Query, pool: set[str], index: OutcomeIndex,
           scorer: PairScorer) -> list[PairScore]:
    """Rescore every pooled document; sort by relevance desc, doc_id asc.

    Scorer outputs outside [0, 1] are clamped with a warning. Scorer
    failures abort the whole note: partial scores are never used.
    """
    doc_ids = sorted(pool)
    docs = [index.documents[d] for d in doc_ids]
    try:
        raw = scorer.score_pairs(query, docs)
    except ProviderError:
        raise
    except Exception as exc:
        raise ProviderError(
            f"pair scorer failed for note {query.note_id!r} on batch {doc_ids}: {exc}") from exc
    if len(raw) != len(docs):
        raise ProviderError(
            f"pair scorer returned {len(raw)} scores for {len(docs)} docs "
            f"(note {query.note_id!r}, batch {doc_ids})")
    scores = []
    for doc_id, value in zip(doc_ids, raw):
        clamped = min(max(float(value), 0.0), 1.0)
        if clamped != value:
            log.warning("scorer emitted %s for doc %s; clamped to [0,1]", value, doc_id)
        scores.append(PairScore(doc_id=doc_id, relevance=clamped))
    scores.sort(key=lambda s: (-s.relevance, s.doc_id))
    return scores


def select_top_k(scores: list[PairScore], k: int, note_id: str = "") -> EvidenceSet:
    if not isinstance(k, int) or k < 1:
        raise ValidationError(f"k must be a positive integer, got {k!r}")
    return EvidenceSet(
        note_id=note_id,
        items=[(s.doc_id, s.relevance) for s in scores[:k]],
        k=k,
    )


class BuiltinLexicalScorer:
    """Deterministic fallback: tf-idf cosine between query terms and doc terms.

    Cosine over non-negative vectors already lies in [0, 1], so the value is
    used directly as the relevance weight.
    """

    def __init__(self, index: OutcomeIndex):
        self.stats = index.tfidf_stats
        self._doc_vectors = {
            doc_id: tfidf_vector(doc.mesh_terms, self.stats)
            for doc_id, doc in index.documents.items()
        }

    def score_pairs(self, query: Query, docs: Sequence[Document]) -> list[float]:
        qvec = tfidf_vector(query.mesh_terms, self.stats)
        return [cosine_sparse(qvec, self._doc_vectors[doc.doc_id]) for doc in docs]


class TrainedPairScorer:
    """Logistic regression over [tfidf cosine, -embedding distance, term overlap].

    Trained with cross-entropy against 0/1 relevance judgments; emits the
    positive-class probability, which is a valid weight by construction.
    """

    def __init__(self, index: OutcomeIndex, embeddings: Mapping[str, np.ndarray],
                 query_embeddings: Mapping[str, np.ndarray]):
        self.index = index
        self.stats = index.tfidf_stats
        self.embeddings = embeddings
        self.query_embeddings = query_embeddings
        self.weights = np.zeros(4)  # 3 features + bias
        self._doc_vectors = {
            doc_id: tfidf_vector(doc.mesh_terms, self.stats)
            for doc_id, doc in index.documents.items()
        }

    def _features(self, query: Query, doc: Document) -> np.ndarray:
        qvec = tfidf_vector(query.mesh_terms, self.stats)
        cos = cosine_sparse(qvec, self._doc_vectors[doc.doc_id])
        q_emb = self.query_embeddings.get(query.note_id)
        d_emb = self.embeddings.get(doc.doc_id)
        neg_dist = -dense_score(q_emb, d_emb) if q_emb is not None and d_emb is not None else 0.0
        overlap = len(set(query.mesh_terms) & set(doc.mesh_terms))
        return np.array([cos, neg_dist, float(overlap), 1.0])

    def fit(self, queries: Mapping[str, Query], judgments: Mapping[str, Mapping[str, int]],
            learning_rate: float = 0.1, epochs: int = 200) -> list[float]:
        """Full-batch Adam on the logistic cross-entropy; returns the loss curve."""
        rows, labels = [], []
        for qid in sorted(judgments):
            query = queries.get(qid)
            if query is None:
                continue
            for doc_id in sorted(judgments[qid]):
                doc = self.index.documents.get(doc_id)
                if doc is None:
                    continue
                rows.append(self._features(query, doc))
                labels.append(1.0 if judgments[qid][doc_id] > 0 else 0.0)
        if not rows:
            raise ValidationError("no usable (query, doc) judgments to train on")
        x = np.stack(rows)
        y = np.asarray(labels)
        adam = AdamState.like(self.weights)
        curve = []
        for _ in range(epochs):
            z = x @ self.weights
            p = 1.0 / (1.0 + np.exp(-z))
            eps = 1e-12
            loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
            curve.append(loss)
            grad = x.T @ (p - y) / len(y)
            self.weights = adam.update(self.weights, grad, learning_rate)
        return curve

    def score_pairs(self, query: Query, docs: Sequence[Document]) -> list[float]:
        out = []
        for doc in docs:
            z = float(self._features(query, doc) @ self.weights)
            out.append(1.0 / (1.0 + math.exp(-z)))
        return out
