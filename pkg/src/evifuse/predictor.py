"""Evidence fusion and outcome classification.

Implements the four aggregation strategies (averaging / weighted averaging
of evidence embeddings, soft / weighted voting over per-pair
probabilities) plus the two single-representation baselines, a linear
softmax head trained with class-weighted cross-entropy under Adam, and
the joint retrieve-and-predict objective with its early-update loss.

All gradients here are analytic and are verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .retrieval import AdamState
from . import storage
from .storage import MODEL_MAGIC, MODEL_VERSION, read_framed, write_framed

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12  # log-underflow clamp inside cross-entropy


class AggregationStrategy(str, Enum):
    NOTE_ONLY = "note_only"
    LITERATURE_ONLY = "literature_only"
    AVERAGING = "averaging"
    WEIGHTED_AVERAGING = "weighted_averaging"
    SOFT_VOTING = "soft_voting"
    WEIGHTED_VOTING = "weighted_voting"


CONCAT_STRATEGIES = {AggregationStrategy.AVERAGING, AggregationStrategy.WEIGHTED_AVERAGING}
VOTING_STRATEGIES = {AggregationStrategy.SOFT_VOTING, AggregationStrategy.WEIGHTED_VOTING}
SINGLE_STRATEGIES = {AggregationStrategy.NOTE_ONLY, AggregationStrategy.LITERATURE_ONLY}


def head_input_dim(strategy: AggregationStrategy, embed_dim: int) -> int:
    """Single-representation heads see dim, pairing/concat heads see 2*dim."""
    return embed_dim if strategy in SINGLE_STRATEGIES else 2 * embed_dim


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass
class ClassifierHead:
    weights: np.ndarray  # (class_count, input_dim)
    bias: np.ndarray     # (class_count,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValidationError("classifier head shapes are inconsistent")

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def init(cls, class_count: int, input_dim: int, seed: int = 0,
             scale: float = 0.01) -> "ClassifierHead":
        rng = np.random.default_rng(seed)
        return cls(weights=rng.normal(0.0, scale, size=(class_count, input_dim)),
                   bias=np.zeros(class_count))

    def probs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise ValidationError(
                f"input dim {x.shape[-1]} does not match head input dim {self.input_dim}")
        return softmax(x @ self.weights.T + self.bias)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def aggregate_avg(embeddings: Sequence[np.ndarray], dim: int | None = None) -> np.ndarray:
    """Elementwise mean of the evidence embeddings; empty -> zero vector."""
    if len(embeddings) == 0:
        if dim is None:
            raise ValidationError("empty evidence and no dimension to fall back to")
        log.warning("empty evidence: aggregate falls back to the zero vector")
        return np.zeros(dim)
    stack = np.stack([np.asarray(e, dtype=np.float64) for e in embeddings])
    return stack.mean(axis=0)


def aggregate_wavg(evidence: Sequence[tuple[np.ndarray, float]],
                   dim: int | None = None) -> np.ndarray:
    """Relevance-weighted mean; zero total weight degrades to the plain mean."""
    if len(evidence) == 0:
        if dim is None:
            raise ValidationError("empty evidence and no dimension to fall back to")
        log.warning("empty evidence: aggregate falls back to the zero vector")
        return np.zeros(dim)
    weights = np.array([w for _, w in evidence], dtype=np.float64)
    if np.any(weights < 0):
        raise ValidationError("evidence weights must be non-negative")
    embs = np.stack([np.asarray(e, dtype=np.float64) for e, _ in evidence])
    total = float(weights.sum())
    if total == 0.0:
        log.warning("all evidence weights are zero: using the unweighted mean")
        return embs.mean(axis=0)
    return (weights[:, None] * embs).sum(axis=0) / total


def _voting_coefficients(weights: np.ndarray, weighted: bool) -> np.ndarray:
    if weighted:
        if np.any(weights < 0):
            raise ValidationError("evidence weights must be non-negative")
        total = float(weights.sum())
        if total == 0.0:
            log.warning("all evidence weights are zero: voting falls back to the plain mean")
            return np.full(len(weights), 1.0 / len(weights))
        return weights / total
    return np.full(len(weights), 1.0 / len(weights))


def predict_concat(note_emb: np.ndarray, lit_emb: np.ndarray,
                   head: ClassifierHead) -> np.ndarray:
    """softmax(W [note; literature] + b)."""
    x = np.concatenate([np.asarray(note_emb, dtype=np.float64),
                        np.asarray(lit_emb, dtype=np.float64)])
    return head.probs(x)


def predict_voting(note_emb: np.ndarray, evidence: Sequence[tuple[np.ndarray, float]],
                   head: ClassifierHead, weighted: bool) -> np.ndarray:
    """(Weighted) mean of per-pair class distributions over [note; doc_i] inputs.

    With no evidence the head still runs, on the [note; 0] pair, which is a
    note-only prediction through the pair head.
    """
    note = np.asarray(note_emb, dtype=np.float64)
    if len(evidence) == 0:
        log.warning("empty evidence: voting falls back to a note-only prediction")
        return head.probs(np.concatenate([note, np.zeros_like(note)]))
    pairs = np.stack([np.concatenate([note, np.asarray(e, dtype=np.float64)])
                      for e, _ in evidence])
    per_pair = head.probs(pairs)
    coeff = _voting_coefficients(np.array([w for _, w in evidence], dtype=np.float64), weighted)
    return coeff @ per_pair


def predict(strategy: AggregationStrategy, head: ClassifierHead, note_emb: np.ndarray,
            evidence: Sequence[tuple[np.ndarray, float]], embed_dim: int) -> np.ndarray:
    """Dispatch a single prediction under any strategy."""
    if strategy is AggregationStrategy.NOTE_ONLY:
        return head.probs(np.asarray(note_emb, dtype=np.float64))
    if strategy is AggregationStrategy.LITERATURE_ONLY:
        lit = aggregate_avg([e for e, _ in evidence], dim=embed_dim)
        return head.probs(lit)
    if strategy is AggregationStrategy.AVERAGING:
        lit = aggregate_avg([e for e, _ in evidence], dim=embed_dim)
        return predict_concat(note_emb, lit, head)
    if strategy is AggregationStrategy.WEIGHTED_AVERAGING:
        lit = aggregate_wavg(evidence, dim=embed_dim)
        return predict_concat(note_emb, lit, head)
    if strategy is AggregationStrategy.SOFT_VOTING:
        return predict_voting(note_emb, evidence, head, weighted=False)
    if strategy is AggregationStrategy.WEIGHTED_VOTING:
        return predict_voting(note_emb, evidence, head, weighted=True)
    raise ValidationError(f"unknown strategy {strategy!r}")


@dataclass
class PredictionRecord:
    note_id: str
    probs: np.ndarray
    predicted_class: int
    evidence: list[tuple[str, float]]
    strategy: AggregationStrategy

    @classmethod
    def from_probs(cls, note_id: str, probs: np.ndarray,
                   evidence: list[tuple[str, float]],
                   strategy: AggregationStrategy) -> "PredictionRecord":
        probs = np.asarray(probs, dtype=np.float64)
        if abs(float(probs.sum()) - 1.0) > 1e-9 or np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError(f"invalid probability vector for note {note_id!r}")
        return cls(note_id=note_id, probs=probs,
                   predicted_class=int(np.argmax(probs)),  # lowest index wins ties
                   evidence=evidence, strategy=strategy)

    def to_dict(self) -> dict:
        return {
            "note_id": self.note_id,
            "probs": [float(p) for p in self.probs],
            "predicted_class": self.predicted_class,
            "evidence": [[doc_id, float(w)] for doc_id, w in self.evidence],
            "strategy": self.strategy.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionRecord":
        return cls(
            note_id=d["note_id"],
            probs=np.asarray(d["probs"], dtype=np.float64),
            predicted_class=int(d["predicted_class"]),
            evidence=[(str(e[0]), float(e[1])) for e in d["evidence"]],
            strategy=AggregationStrategy(d["strategy"]),
        )


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def class_weights(counts: Sequence[int]) -> np.ndarray:
    """w_i = N / (c * n_i): the balanced reweighting for cross-entropy.

    Satisfies sum_i n_i * w_i = N exactly (up to float error).
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or len(counts) == 0:
        raise ValidationError("counts must be a non-empty vector")
    if np.any(counts < 1):
        raise ValidationError(
            "every class needs at least one example; merge or drop empty classes")
    total = float(counts.sum())
    return total / (len(counts) * counts)


def weighted_ce_loss(probs: np.ndarray, label: int, weights: np.ndarray) -> float:
    """-w_label * ln(p_label), with p clamped at 1e-12 against log underflow."""
    probs = np.asarray(probs, dtype=np.float64)
    if label < 0 or label >= len(probs):
        raise ValidationError(f"label {label} out of range for {len(probs)} classes")
    p = float(probs[label])
    if p < PROB_FLOOR:
        log.warning("probability underflow (%.3e) clamped in cross-entropy", p)
        p = PROB_FLOOR
    return float(-weights[label] * np.log(p))


@dataclass
class TrainExample:
    note_emb: np.ndarray
    evidence: list[tuple[np.ndarray, float]]
    label: int


def example_loss_and_grads(example: TrainExample, strategy: AggregationStrategy,
                           head: ClassifierHead, weight_vec: np.ndarray,
                           embed_dim: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted CE loss for one example plus analytic d/dW and d/db."""
    label = example.label
    w_y = float(weight_vec[label])
    note = np.asarray(example.note_emb, dtype=np.float64)

    if strategy in VOTING_STRATEGIES and len(example.evidence) > 0:
        pairs = np.stack([np.concatenate([note, np.asarray(e, dtype=np.float64)])
                          for e, _ in example.evidence])
        per_pair = head.probs(pairs)  # (k, c)
        coeff = _voting_coefficients(
            np.array([w for _, w in example.evidence], dtype=np.float64),
            weighted=strategy is AggregationStrategy.WEIGHTED_VOTING)
        agg = coeff @ per_pair
        p_y = max(float(agg[label]), PROB_FLOOR)
        loss = -w_y * np.log(p_y)
        onehot = np.zeros(head.class_count)
        onehot[label] = 1.0
        # dL/dz_i = (w_y * a_i * p_iy / p_y) * (p_i - onehot)
        scale = w_y * coeff * per_pair[:, label] / p_y  # (k,)
        dz = scale[:, None] * (per_pair - onehot)       # (k, c)
        g_w = dz.T @ pairs
        g_b = dz.sum(axis=0)
        return float(loss), g_w, g_b

    x = _fused_input(example, strategy, embed_dim)
    p = head.probs(x)
    p_y = max(float(p[label]), PROB_FLOOR)
    loss = -w_y * np.log(p_y)
    onehot = np.zeros(head.class_count)
    onehot[label] = 1.0
    dz = w_y * (p - onehot)
    return float(loss), np.outer(dz, x), dz


def _fused_input(example: TrainExample, strategy: AggregationStrategy,
                 embed_dim: int) -> np.ndarray:
    note = np.asarray(example.note_emb, dtype=np.float64)
    if strategy is AggregationStrategy.NOTE_ONLY:
        return note
    if strategy is AggregationStrategy.LITERATURE_ONLY:
        return aggregate_avg([e for e, _ in example.evidence], dim=embed_dim)
    if strategy is AggregationStrategy.AVERAGING:
        return np.concatenate([note, aggregate_avg([e for e, _ in example.evidence],
                                                   dim=embed_dim)])
    if strategy is AggregationStrategy.WEIGHTED_AVERAGING:
        return np.concatenate([note, aggregate_wavg(example.evidence, dim=embed_dim)])
    # voting with empty evidence: note-only pair
    return np.concatenate([note, np.zeros(embed_dim)])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    epochs: int = 100
    grad_accumulation: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.grad_accumulation < 1:
            raise ValidationError("bad training configuration")


def train_head(dataset: Sequence[TrainExample], strategy: AggregationStrategy,
               class_count: int, embed_dim: int, config: TrainConfig,
               weight_vec: np.ndarray | None = None) -> ClassifierHead:
    """Adam-optimized head on class-weighted cross-entropy.

    Gradients are accumulated (averaged) over `grad_accumulation`
    consecutive examples in dataset order, so runs are bit-reproducible for
    a given seed.
    """
    if len(dataset) == 0:
        raise ValidationError("empty training dataset")
    for ex in dataset:
        if not 0 <= ex.label < class_count:
            raise ValidationError(f"label {ex.label} out of range")
    if weight_vec is None:
        counts = np.bincount([ex.label for ex in dataset], minlength=class_count)
        weight_vec = class_weights(counts)
    head = ClassifierHead.init(class_count, head_input_dim(strategy, embed_dim),
                               seed=config.seed)
    adam_w = AdamState.like(head.weights)
    adam_b = AdamState.like(head.bias)
    ga = config.grad_accumulation
    for _ in range(config.epochs):
        for start in range(0, len(dataset), ga):
            chunk = dataset[start:start + ga]
            g_w = np.zeros_like(head.weights)
            g_b = np.zeros_like(head.bias)
            for ex in chunk:
                _, gw, gb = example_loss_and_grads(ex, strategy, head, weight_vec, embed_dim)
                g_w += gw
                g_b += gb
            g_w /= len(chunk)
            g_b /= len(chunk)
            head.weights = adam_w.update(head.weights, g_w, config.learning_rate)
            head.bias = adam_b.update(head.bias, g_b, config.learning_rate)
    return head


def dataset_loss(dataset: Sequence[TrainExample], strategy: AggregationStrategy,
                 head: ClassifierHead, weight_vec: np.ndarray, embed_dim: int) -> float:
    total = 0.0
    for ex in dataset:
        loss, _, _ = example_loss_and_grads(ex, strategy, head, weight_vec, embed_dim)
        total += loss
    return total / len(dataset)


# ---------------------------------------------------------------------------
# joint retrieval + outcome training
# ---------------------------------------------------------------------------

@dataclass
class L2RState:
    """Trainable projections for the joint retriever plus its loss weight."""

    a_query: np.ndarray
    a_doc: np.ndarray
    lambda_early: float = 1.0
    candidate_count: int = 100

    def __post_init__(self):
        self.a_query = np.asarray(self.a_query, dtype=np.float64)
        self.a_doc = np.asarray(self.a_doc, dtype=np.float64)
        if self.lambda_early < 0:
            raise ValidationError("lambda_early must be >= 0")

    @classmethod
    def identity(cls, dim: int, lambda_early: float = 1.0,
                 candidate_count: int = 100) -> "L2RState":
        return cls(np.eye(dim), np.eye(dim), lambda_early, candidate_count)


def retrieval_scores(state: L2RState, note_emb: np.ndarray,
                     cand_embs: np.ndarray) -> np.ndarray:
    """Cosine between projected note and projected candidate embeddings."""
    u = state.a_query @ np.asarray(note_emb, dtype=np.float64)
    v = (state.a_doc @ np.asarray(cand_embs, dtype=np.float64).T).T  # (n, d)
    nu = float(np.linalg.norm(u))
    nv = np.linalg.norm(v, axis=1)
    denom = nu * nv
    safe = denom > 0
    scores = np.zeros(len(v))
    scores[safe] = (v[safe] @ u) / denom[safe]
    return scores


def early_update_loss(scores: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """-log sum_j y_j P(j), P = softmax(scores); also returns dL/dscores."""
    y = np.asarray(y, dtype=np.float64)
    if not np.any(y > 0):
        raise ValidationError("early-update loss undefined: no candidate is labeled helpful")
    p = softmax(scores)
    mass = float((y * p).sum())
    loss = -np.log(max(mass, PROB_FLOOR))
    d_scores = p * (1.0 - y / max(mass, PROB_FLOOR))
    return float(loss), d_scores


def assign_yj(baseline_probs: np.ndarray, paired_probs: np.ndarray, correct_label: int) -> int:
    """1 iff pairing the candidate with the note raises the correct-class confidence."""
    return int(float(paired_probs[correct_label]) > float(baseline_probs[correct_label]))


@dataclass
class L2RExample:
    note_emb: np.ndarray
    cand_ids: list[str]
    cand_embs: np.ndarray  # (n_candidates, dim)
    y: np.ndarray          # (n_candidates,) 0/1 helpfulness
    label: int


def l2r_losses(example: L2RExample, state: L2RState, head: ClassifierHead,
               weight_vec: np.ndarray, k: int,
               strategy: AggregationStrategy = AggregationStrategy.SOFT_VOTING,
               ) -> tuple[float, float]:
    """(outcome loss over the current top-k, early-update loss)."""
    scores = retrieval_scores(state, example.note_emb, example.cand_embs)
    early, _ = early_update_loss(scores, example.y)
    idx = _topk_indices(scores, example.cand_ids, k)
    evidence = [(example.cand_embs[i], 1.0) for i in idx]
    embed_dim = example.cand_embs.shape[1]
    ex = TrainExample(note_emb=example.note_emb, evidence=evidence, label=example.label)
    outcome, _, _ = example_loss_and_grads(ex, strategy, head, weight_vec, embed_dim)
    return outcome, early


def _topk_indices(scores: np.ndarray, cand_ids: list[str], k: int) -> list[int]:
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], cand_ids[i]))
    return order[:k]


def _early_grads(example: L2RExample, state: L2RState,
                 ) -> tuple[float, np.ndarray, np.ndarray]:
    """Early-update loss and its gradients w.r.t. both projections.

    With u = A_q q and v_i = A_d d_i, the per-candidate cosine gradients
    collapse into one outer product on the query side and one matmul on
    the document side.
    """
    q = np.asarray(example.note_emb, dtype=np.float64)
    d = np.asarray(example.cand_embs, dtype=np.float64)
    u = state.a_query @ q
    v = (state.a_doc @ d.T).T
    nu = float(np.linalg.norm(u))
    nv = np.linalg.norm(v, axis=1)
    denom = nu * nv
    safe = denom > 0
    scores = np.zeros(len(v))
    scores[safe] = (v[safe] @ u) / denom[safe]
    loss, d_scores = early_update_loss(scores, example.y)
    coeff = np.where(safe, d_scores, 0.0)
    inv_denom = np.where(safe, 1.0 / np.where(safe, denom, 1.0), 0.0)
    # d(score_i)/du = v_i/denom_i - score_i * u/|u|^2
    du_vec = (coeff * inv_denom) @ v
    if nu > 0:
        du_vec -= float(coeff @ scores) * u / (nu * nu)
    g_aq = np.outer(du_vec, q)
    # d(score_i)/dv_i = u/denom_i - score_i * v_i/|v_i|^2
    inv_nv2 = np.where(nv > 0, 1.0 / np.where(nv > 0, nv * nv, 1.0), 0.0)
    dv_rows = (coeff * inv_denom)[:, None] * u[None, :] \
        - (coeff * scores * inv_nv2)[:, None] * v
    g_ad = dv_rows.T @ d
    return loss, g_aq, g_ad


def train_l2r(dataset: Sequence[L2RExample], state: L2RState, head: ClassifierHead,
              weight_vec: np.ndarray, k: int, config: TrainConfig,
              strategy: AggregationStrategy = AggregationStrategy.SOFT_VOTING,
              ) -> tuple[L2RState, ClassifierHead, list[float]]:
    """Joint training: head follows the outcome loss on its current top-k
    evidence, the projections follow lambda * early-update loss.

    Notes without any helpful candidate contribute only the outcome loss.
    Returns the per-epoch mean early-update loss trajectory.
    """
    if len(dataset) == 0:
        raise ValidationError("empty training dataset")
    embed_dim = dataset[0].cand_embs.shape[1]
    adam_w = AdamState.like(head.weights)
    adam_b = AdamState.like(head.bias)
    adam_aq = AdamState.like(state.a_query)
    adam_ad = AdamState.like(state.a_doc)
    skipped = sum(1 for ex in dataset if not np.any(ex.y > 0))
    if skipped:
        log.warning("%d notes have no helpful candidate: early-update loss skipped for them",
                    skipped)
    history: list[float] = []
    ga = config.grad_accumulation
    for _ in range(config.epochs):
        early_total, early_count = 0.0, 0
        for start in range(0, len(dataset), ga):
            chunk = dataset[start:start + ga]
            g_w = np.zeros_like(head.weights)
            g_b = np.zeros_like(head.bias)
            g_aq = np.zeros_like(state.a_query)
            g_ad = np.zeros_like(state.a_doc)
            for ex in chunk:
                scores = retrieval_scores(state, ex.note_emb, ex.cand_embs)
                idx = _topk_indices(scores, ex.cand_ids, k)
                evidence = [(ex.cand_embs[i], 1.0) for i in idx]
                tex = TrainExample(note_emb=ex.note_emb, evidence=evidence, label=ex.label)
                _, gw, gb = example_loss_and_grads(tex, strategy, head, weight_vec, embed_dim)
                g_w += gw
                g_b += gb
                if np.any(ex.y > 0):
                    early, gq, gd = _early_grads(ex, state)
                    g_aq += state.lambda_early * gq
                    g_ad += state.lambda_early * gd
                    early_total += early
                    early_count += 1
            n = len(chunk)
            head.weights = adam_w.update(head.weights, g_w / n, config.learning_rate)
            head.bias = adam_b.update(head.bias, g_b / n, config.learning_rate)
            state.a_query = adam_aq.update(state.a_query, g_aq / n, config.learning_rate)
            state.a_doc = adam_ad.update(state.a_doc, g_ad / n, config.learning_rate)
        history.append(early_total / max(early_count, 1))
    return state, head, history


def l2r_select(state: L2RState, note_emb: np.ndarray, cand_ids: list[str],
               cand_embs: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Evidence chosen by the trained retriever: (doc_id, retrieval score)."""
    scores = retrieval_scores(state, note_emb, cand_embs)
    idx = _topk_indices(scores, cand_ids, k)
    return [(cand_ids[i], float(scores[i])) for i in idx]


# ---------------------------------------------------------------------------
# model persistence
# ---------------------------------------------------------------------------

@dataclass
class OutcomeModel:
    strategy: AggregationStrategy
    head: ClassifierHead
    class_weight_vec: np.ndarray
    embed_dim: int
    train_config: dict = field(default_factory=dict)
    seed: int = 0
    l2r: L2RState | None = None


def save_model(model: OutcomeModel, path: str | Path) -> None:
    w = storage._Writer()
    w.string(model.strategy.value)
    w.u32(model.embed_dim)
    w.u64(model.seed)
    w.f64_array(model.head.weights)
    w.f64_array(model.head.bias)
    w.f64_array(np.asarray(model.class_weight_vec, dtype=np.float64))
    w.string(json.dumps(model.train_config, sort_keys=True))
    w.u8(1 if model.l2r is not None else 0)
    if model.l2r is not None:
        w.f64_array(model.l2r.a_query)
        w.f64_array(model.l2r.a_doc)
        w.f64(model.l2r.lambda_early)
        w.u32(model.l2r.candidate_count)
    write_framed(path, MODEL_MAGIC, MODEL_VERSION, w.getvalue())


def load_model(path: str | Path) -> OutcomeModel:
    r = storage._Reader(read_framed(path, MODEL_MAGIC, MODEL_VERSION))
    strategy = AggregationStrategy(r.string())
    embed_dim = r.u32()
    seed = r.u64()
    weights = r.f64_array()
    bias = r.f64_array()
    weight_vec = r.f64_array()
    train_config = json.loads(r.string())
    l2r = None
    if r.u8():
        l2r = L2RState(a_query=r.f64_array(), a_doc=r.f64_array(),
                       lambda_early=r.f64(), candidate_count=r.u32())
    return OutcomeModel(strategy=strategy, head=ClassifierHead(weights, bias),
                        class_weight_vec=weight_vec, embed_dim=embed_dim,
                        train_config=train_config, seed=seed, l2r=l2r)
