"""Candidate retrieval: sparse term-vector cosine and dense embedding search.

Also houses the trainable linear projections that stand in for the query
and document encoders of a bi-encoder, trained with a margin (triplet)
loss over Euclidean distances.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import OutcomeIndex, TfidfStats
from .errors import IngestionError, ValidationError
from .notes import Query


class Stage(str, Enum):
    SPARSE = "sparse"
    DENSE = "dense"
    RERANKED = "reranked"


@dataclass
class RankedList:
    """Ordered (doc_id, score) pairs; scores are non-increasing similarities.

    Dense rankings store similarity = -distance so every stage exposes the
    same "larger is better" convention.
    """

    entries: list[tuple[str, float]]
    stage: Stage

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def top(self, n: int) -> list[str]:
        return [doc_id for doc_id, _ in self.entries[:n]]


# ---------------------------------------------------------------------------
# sparse: tf-idf cosine over descriptor multisets
# ---------------------------------------------------------------------------

def idf(term: str, stats: TfidfStats) -> float:
    # smoothed variant: terms unseen in the index still get a finite weight
    return math.log((1.0 + stats.doc_count) / (1.0 + stats.df(term))) + 1.0


def tfidf_vector(terms: Counter | Mapping[str, int], stats: TfidfStats) -> dict[str, float]:
    """L2-normalized tf*idf weights; the empty multiset yields the empty vector."""
    weights = {}
    for term in sorted(terms):
        tf = terms[term]
        if tf <= 0:
            continue
        weights[term] = tf * idf(term, stats)
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {}
    return {t: w / norm for t, w in weights.items()}


def cosine_sparse(a: dict[str, float], b: dict[str, float]) -> float:
    if len(b) < len(a):
        a, b = b, a
    return sum(w * b[t] for t, w in sorted(a.items()) if t in b)


class SparseRetriever:
    """Exhaustive tf-idf cosine scan over an outcome index.

    Document vectors are computed once; candidate documents are generated
    through per-term postings so disjoint documents are never scored.
    """

    def __init__(self, index: OutcomeIndex):
        self.index = index
        self.stats = index.tfidf_stats
        self._doc_vectors: dict[str, dict[str, float]] = {
            doc_id: tfidf_vector(doc.mesh_terms, self.stats)
            for doc_id, doc in index.documents.items()
        }
        self._postings: dict[str, list[str]] = {}
        for doc_id in sorted(self._doc_vectors):
            for term in self._doc_vectors[doc_id]:
                self._postings.setdefault(term, []).append(doc_id)

    def retrieve(self, query: Query, n: int) -> RankedList:
        if n <= 0:
            raise ValidationError(f"n must be positive, got {n}")
        qvec = tfidf_vector(query.mesh_terms, self.stats)
        if not qvec:
            return RankedList(entries=[], stage=Stage.SPARSE)
        candidates: set[str] = set()
        for term in qvec:
            candidates.update(self._postings.get(term, ()))
        scored = [(doc_id, cosine_sparse(qvec, self._doc_vectors[doc_id]))
                  for doc_id in candidates]
        scored.sort(key=lambda e: (-e[1], e[0]))
        return RankedList(entries=scored[:n], stage=Stage.SPARSE)


def sparse_retrieve(query: Query, index: OutcomeIndex, n: int) -> RankedList:
    return SparseRetriever(index).retrieve(query, n)


# ---------------------------------------------------------------------------
# dense: Euclidean nearest neighbours
# ---------------------------------------------------------------------------

def dense_score(q: np.ndarray, d: np.ndarray) -> float:
    """Euclidean distance; callers expose similarity = -distance."""
    q = np.asarray(q, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if q.shape != d.shape:
        raise ValidationError(f"embedding dims differ: {q.shape[0]} vs {d.shape[0]}")
    return float(np.linalg.norm(q - d))


def dense_retrieve(q: np.ndarray, embeddings: Mapping[str, np.ndarray], n: int) -> RankedList:
    """Top-n by ascending distance to q, ties by ascending doc_id.

    Distances are computed batched; the row-wise reduction matches
    per-pair dense_score bit for bit.
    """
    if n <= 0:
        raise ValidationError(f"n must be positive, got {n}")
    q = np.asarray(q, dtype=np.float64)
    doc_ids = list(embeddings.keys())
    if not doc_ids:
        return RankedList(entries=[], stage=Stage.DENSE)
    matrix = np.stack([np.asarray(embeddings[d], dtype=np.float64) for d in doc_ids])
    if matrix.shape[1] != q.shape[0]:
        raise ValidationError(f"embedding dims differ: {q.shape[0]} vs {matrix.shape[1]}")
    deltas = matrix - q
    dists = [float(np.linalg.norm(row)) for row in deltas]
    scored = sorted(zip(doc_ids, dists), key=lambda e: (e[1], e[0]))
    return RankedList(entries=[(doc_id, -dist) for doc_id, dist in scored[:n]],
                      stage=Stage.DENSE)


# ---------------------------------------------------------------------------
# bi-encoder projections + triplet loss
# ---------------------------------------------------------------------------

@dataclass
class ProjectionPair:
    """Linear query/document projections scored by Euclidean distance."""

    w_query: np.ndarray
    w_doc: np.ndarray
    margin: float

    def __post_init__(self):
        if self.margin <= 0:
            raise ValidationError(f"margin must be positive, got {self.margin}")
        self.w_query = np.asarray(self.w_query, dtype=np.float64)
        self.w_doc = np.asarray(self.w_doc, dtype=np.float64)

    @classmethod
    def identity(cls, dim: int, margin: float = 0.5) -> "ProjectionPair":
        return cls(np.eye(dim), np.eye(dim), margin)

    def score(self, q: np.ndarray, d: np.ndarray) -> float:
        return dense_score(self.w_query @ np.asarray(q, dtype=np.float64),
                           self.w_doc @ np.asarray(d, dtype=np.float64))


def triplet_loss(q: np.ndarray, d_pos: np.ndarray, d_neg: np.ndarray,
                 proj: ProjectionPair) -> float:
    """max(d(q, pos) - d(q, neg) + margin, 0) in the projected space."""
    s_pos = proj.score(q, d_pos)
    s_neg = proj.score(q, d_neg)
    return max(s_pos - s_neg + proj.margin, 0.0)


def triplet_loss_grads(q: np.ndarray, d_pos: np.ndarray, d_neg: np.ndarray,
                       proj: ProjectionPair) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus analytic gradients w.r.t. both projection matrices.

    When the margin is already satisfied the hinge is inactive and both
    gradients are zero; zero distances use the zero subgradient.
    """
    q = np.asarray(q, dtype=np.float64)
    d_pos = np.asarray(d_pos, dtype=np.float64)
    d_neg = np.asarray(d_neg, dtype=np.float64)
    pq = proj.w_query @ q
    r_pos = pq - proj.w_doc @ d_pos
    r_neg = pq - proj.w_doc @ d_neg
    s_pos = float(np.linalg.norm(r_pos))
    s_neg = float(np.linalg.norm(r_neg))
    loss = s_pos - s_neg + proj.margin
    g_wq = np.zeros_like(proj.w_query)
    g_wd = np.zeros_like(proj.w_doc)
    if loss <= 0.0:
        return 0.0, g_wq, g_wd
    u_pos = r_pos / s_pos if s_pos > 0 else np.zeros_like(r_pos)
    u_neg = r_neg / s_neg if s_neg > 0 else np.zeros_like(r_neg)
    g_wq = np.outer(u_pos - u_neg, q)
    g_wd = -np.outer(u_pos, d_pos) + np.outer(u_neg, d_neg)
    return loss, g_wq, g_wd


@dataclass
class BiencoderConfig:
    learning_rate: float = 1e-2
    epochs: int = 50
    margin: float = 0.5
    seed: int = 0


def train_biencoder(triples: Iterable[tuple[str, str, str]],
                    query_embeddings: Mapping[str, np.ndarray],
                    doc_embeddings: Mapping[str, np.ndarray],
                    config: BiencoderConfig) -> ProjectionPair:
    """Fit the projections by Adam on the mean triplet loss.

    Deterministic for a given seed (the per-epoch triple order is drawn from
    it), and the returned projections are the ones with the lowest full-set
    mean loss observed, so the final loss never exceeds the initial one.
    """
    triples = list(triples)
    if not triples:
        raise ValidationError("no training triples supplied")
    resolved = []
    for qid, pos_id, neg_id in triples:
        try:
            resolved.append((np.asarray(query_embeddings[qid], dtype=np.float64),
                             np.asarray(doc_embeddings[pos_id], dtype=np.float64),
                             np.asarray(doc_embeddings[neg_id], dtype=np.float64)))
        except KeyError as exc:
            raise ValidationError(f"triple references unknown id {exc}") from exc
    dim = resolved[0][0].shape[0]
    proj = ProjectionPair.identity(dim, margin=config.margin)

    def mean_loss(p: ProjectionPair) -> float:
        return sum(triplet_loss(q, dp, dn, p) for q, dp, dn in resolved) / len(resolved)

    best_loss = mean_loss(proj)
    best = (proj.w_query.copy(), proj.w_doc.copy())
    rng = np.random.default_rng(config.seed)
    adam_q = AdamState.like(proj.w_query)
    adam_d = AdamState.like(proj.w_doc)
    for _ in range(config.epochs):
        order = rng.permutation(len(resolved))
        g_wq = np.zeros_like(proj.w_query)
        g_wd = np.zeros_like(proj.w_doc)
        for i in order:
            q, dp, dn = resolved[i]
            _, gq, gd = triplet_loss_grads(q, dp, dn, proj)
            g_wq += gq
            g_wd += gd
        g_wq /= len(resolved)
        g_wd /= len(resolved)
        proj.w_query = adam_q.update(proj.w_query, g_wq, config.learning_rate)
        proj.w_doc = adam_d.update(proj.w_doc, g_wd, config.learning_rate)
        loss = mean_loss(proj)
        if loss < best_loss:
            best_loss = loss
            best = (proj.w_query.copy(), proj.w_doc.copy())
    return ProjectionPair(best[0], best[1], config.margin)


class AdamState:
    """Adam with the conventional constants (b1=0.9, b2=0.999, eps=1e-8)."""

    def __init__(self, shape):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    @classmethod
    def like(cls, array: np.ndarray) -> "AdamState":
        return cls(array.shape)

    def update(self, params: np.ndarray, grad: np.ndarray, lr: float,
               b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8) -> np.ndarray:
        self.t += 1
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad * grad
        m_hat = self.m / (1 - b1 ** self.t)
        v_hat = self.v / (1 - b2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# training-data ingestion
# ---------------------------------------------------------------------------

def read_triples_tsv(path: str | Path) -> list[tuple[str, str, str]]:
    """query_id<TAB>pos_id<TAB>neg_id lines."""
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise IngestionError(f"{path}:{lineno}: expected query<TAB>pos<TAB>neg")
            triples.append((parts[0], parts[1], parts[2]))
    return triples


def read_judgments_tsv(path: str | Path) -> dict[str, dict[str, int]]:
    """query_id<TAB>doc_id<TAB>relevance(0/1/2) lines -> nested mapping."""
    judgments: dict[str, dict[str, int]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise IngestionError(f"{path}:{lineno}: expected query<TAB>doc<TAB>relevance")
            qid, doc_id, rel = parts
            judgments.setdefault(qid, {})[doc_id] = int(rel)
    return judgments


def triples_from_judgments(judgments: dict[str, dict[str, int]],
                           seed: int = 0, per_query: int = 10) -> list[tuple[str, str, str]]:
    """Pair each relevant doc with sampled irrelevant docs from the same query."""
    rng = np.random.default_rng(seed)
    triples = []
    for qid in sorted(judgments):
        docs = judgments[qid]
        positives = sorted(d for d, rel in docs.items() if rel > 0)
        negatives = sorted(d for d, rel in docs.items() if rel == 0)
        if not positives or not negatives:
            continue
        for _ in range(per_query):
            pos = positives[int(rng.integers(len(positives)))]
            neg = negatives[int(rng.integers(len(negatives)))]
            triples.append((qid, pos, neg))
    return triples
