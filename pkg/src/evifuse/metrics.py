"""Evaluation metrics: AUROC, F1 variants, confidence-band precision/recall,
retrieval precision@k with cross-validation folds, and evidence-diversity
histograms."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .predictor import PredictionRecord
from .rerank import EvidenceSet

log = logging.getLogger(__name__)


@dataclass
class MetricReport:
    auroc: float
    micro_f1: float
    macro_f1: float
    per_class: list[tuple[float, float, float]]  # (precision, recall, f1)
    topk: list[tuple[float, float | None]]       # (precision@top, recall@top) per class
    n: int

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "per_class": [list(row) for row in self.per_class],
            "topk": [list(row) for row in self.topk],
            "n": self.n,
        }


@dataclass
class DiversityReport:
    # (doc_id, fraction of notes whose evidence includes it), sorted descending
    histogram: list[tuple[str, float]]

    def to_csv(self) -> str:
        lines = ["doc_id,fraction"]
        lines += [f"{doc_id},{frac}" for doc_id, frac in self.histogram]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# AUROC
# ---------------------------------------------------------------------------

def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUROC: (concordant + 0.5*tied) / (n_pos * n_neg).

    Computed through average ranks, which is exactly the pair-counting
    value without the quadratic scan.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if len(scores) != len(labels):
        raise ValidationError("scores and labels differ in length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUROC undefined: both classes must be present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        avg_rank = (i + j) / 2.0 + 1.0  # 1-based average rank across the tie block
        ranks[order[i:j + 1]] = avg_rank
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def multiclass_auroc(prob_matrix: np.ndarray, labels: Sequence[int]) -> float:
    """Macro one-vs-rest AUROC; classes absent from the labels are skipped."""
    prob_matrix = np.asarray(prob_matrix, dtype=np.float64)
    labels = np.asarray(labels)
    class_count = prob_matrix.shape[1]
    if class_count == 2:
        return auroc(prob_matrix[:, 1], (labels == 1).astype(int))
    values = []
    for c in range(class_count):
        binary = (labels == c).astype(int)
        if binary.sum() in (0, len(binary)):
            log.warning("class %d absent from labels (or exhaustive): skipped in macro AUROC", c)
            continue
        values.append(auroc(prob_matrix[:, c], binary))
    if not values:
        raise ValidationError("AUROC undefined: no class has both positives and negatives")
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# F1
# ---------------------------------------------------------------------------

def f1_scores(predictions: Sequence[int], labels: Sequence[int],
              class_count: int | None = None,
              ) -> tuple[float, float, list[tuple[float, float, float]]]:
    """(micro F1, macro F1, per-class (precision, recall, f1)).

    Micro pools the confusion counts; macro is the unweighted class mean;
    a class with no predictions and no members scores 0 throughout.
    """
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(predictions) == 0:
        raise ValidationError("empty evaluation input")
    if len(predictions) != len(labels):
        raise ValidationError("predictions and labels differ in length")
    if class_count is None:
        class_count = int(max(predictions.max(), labels.max())) + 1
    per_class = []
    tp_sum = fp_sum = fn_sum = 0
    for c in range(class_count):
        tp = int(np.sum((predictions == c) & (labels == c)))
        fp = int(np.sum((predictions == c) & (labels != c)))
        fn = int(np.sum((predictions != c) & (labels == c)))
        tp_sum, fp_sum, fn_sum = tp_sum + tp, fp_sum + fp, fn_sum + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append((precision, recall, f1))
    micro_p = tp_sum / (tp_sum + fp_sum) if tp_sum + fp_sum else 0.0
    micro_r = tp_sum / (tp_sum + fn_sum) if tp_sum + fn_sum else 0.0
    micro = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    macro = float(np.mean([row[2] for row in per_class]))
    return micro, macro, per_class


# ---------------------------------------------------------------------------
# confidence-band evaluation
# ---------------------------------------------------------------------------

def topk_precision_recall(records: Sequence[PredictionRecord], labels: Mapping[str, int],
                          target_class: int, fraction: float = 0.10,
                          ) -> tuple[float, float | None]:
    """Precision/recall over the ceil(fraction*n) records most confident in the class.

    Selection ranks all records by probs[target_class] (ties by note_id);
    recall is None when no record truly belongs to the class.
    """
    if not records:
        raise ValidationError("no prediction records")
    n_select = math.ceil(fraction * len(records))
    ranked = sorted(records, key=lambda r: (-float(r.probs[target_class]), r.note_id))
    selected = ranked[:n_select]
    hits = sum(1 for r in selected if labels[r.note_id] == target_class)
    total_true = sum(1 for r in records if labels[r.note_id] == target_class)
    precision = hits / len(selected) if selected else 0.0
    if total_true == 0:
        log.warning("class %d has no true members: recall undefined", target_class)
        return precision, None
    return precision, hits / total_true


def confidence_increase_filter(aug_records: Sequence[PredictionRecord],
                               baseline_records: Sequence[PredictionRecord],
                               labels: Mapping[str, int],
                               threshold: float = 0.10) -> dict[int, float]:
    """Per-class precision over notes whose augmented confidence rose by
    more than `threshold` relative to the baseline on the predicted class."""
    baseline_by_id = {r.note_id: r for r in baseline_records}
    kept: list[PredictionRecord] = []
    for rec in aug_records:
        base = baseline_by_id.get(rec.note_id)
        if base is None:
            raise ValidationError(f"baseline record missing for note {rec.note_id!r}")
        c = rec.predicted_class
        if float(rec.probs[c]) > float(base.probs[c]) * (1.0 + threshold):
            kept.append(rec)
    out: dict[int, float] = {}
    by_class: dict[int, list[PredictionRecord]] = {}
    for rec in kept:
        by_class.setdefault(rec.predicted_class, []).append(rec)
    for c, group in sorted(by_class.items()):
        hits = sum(1 for r in group if labels[r.note_id] == c)
        out[c] = hits / len(group)
    return out


# ---------------------------------------------------------------------------
# retrieval metrics
# ---------------------------------------------------------------------------

def retrieval_precision_at_k(ranking_ids: Sequence[str], judgments: Mapping[str, int],
                             k: int = 10) -> float:
    """Fraction of the top-k judged relevant; unjudged documents count as irrelevant."""
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    top = list(ranking_ids)[:k]
    if not top:
        return 0.0
    hits = sum(1 for doc_id in top if judgments.get(doc_id, 0) > 0)
    return hits / len(top)


def kfold_splits(ids: Sequence[str], n_folds: int) -> list[list[str]]:
    """Deterministic contiguous folds over the sorted ids, sizes as equal as possible."""
    if n_folds < 2:
        raise ValidationError("need at least 2 folds")
    ordered = sorted(ids)
    if len(ordered) < n_folds:
        raise ValidationError(f"cannot split {len(ordered)} ids into {n_folds} folds")
    base, extra = divmod(len(ordered), n_folds)
    folds, start = [], 0
    for i in range(n_folds):
        size = base + (1 if i < extra else 0)
        folds.append(ordered[start:start + size])
        start += size
    return folds


def cross_validated_precision(query_ids: Sequence[str],
                              judgments: Mapping[str, Mapping[str, int]],
                              rank_factory: Callable[[list[str]], Callable[[str], Sequence[str]]],
                              n_folds: int = 5, k: int = 10,
                              ) -> tuple[float, list[float]]:
    """Mean precision@k across folds.

    `rank_factory(train_ids)` yields a ranker for the held-out queries; the
    returned value is (mean over folds, per-fold means).
    """
    folds = kfold_splits(query_ids, n_folds)
    fold_means = []
    for i, held_out in enumerate(folds):
        train_ids = [qid for j, fold in enumerate(folds) if j != i for qid in fold]
        ranker = rank_factory(train_ids)
        values = [retrieval_precision_at_k(ranker(qid), judgments.get(qid, {}), k)
                  for qid in held_out]
        fold_means.append(float(np.mean(values)))
    return float(np.mean(fold_means)), fold_means


def diversity_report(evidence_sets: Sequence[EvidenceSet], top_n: int = 100) -> DiversityReport:
    """For the most frequently retrieved documents, the fraction of notes
    whose evidence set contains them."""
    if not evidence_sets:
        raise ValidationError("no evidence sets")
    counts: dict[str, int] = {}
    for ev in evidence_sets:
        for doc_id, _ in ev.items:
            counts[doc_id] = counts.get(doc_id, 0) + 1
    ranked = sorted(counts.items(), key=lambda e: (-e[1], e[0]))[:top_n]
    n_notes = len(evidence_sets)
    return DiversityReport(histogram=[(doc_id, c / n_notes) for doc_id, c in ranked])


# ---------------------------------------------------------------------------
# assembled reports
# ---------------------------------------------------------------------------

def evaluate_predictions(records: Sequence[PredictionRecord], labels: Mapping[str, int],
                         class_count: int, topk_fraction: float = 0.10) -> MetricReport:
    if not records:
        raise ValidationError("no prediction records")
    label_vec = [labels[r.note_id] for r in records]
    pred_vec = [r.predicted_class for r in records]
    prob_matrix = np.stack([r.probs for r in records])
    micro, macro, per_class = f1_scores(pred_vec, label_vec, class_count)
    roc = multiclass_auroc(prob_matrix, label_vec)
    topk = [topk_precision_recall(records, labels, c, topk_fraction)
            for c in range(class_count)]
    return MetricReport(auroc=roc, micro_f1=micro, macro_f1=macro,
                        per_class=per_class, topk=topk, n=len(records))


def render_report_text(report: MetricReport, title: str = "") -> str:
    """Aligned-column text mirroring the familiar results-table layout."""
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'n':>10} {'AUROC':>8} {'Micro F1':>9} {'Macro F1':>9}")
    lines.append(f"{report.n:>10} {100 * report.auroc:>8.2f} "
                 f"{100 * report.micro_f1:>9.2f} {100 * report.macro_f1:>9.2f}")
    lines.append("")
    lines.append(f"{'class':>6} {'Prec':>8} {'Rec':>8} {'F1':>8} {'P@top':>8} {'R@top':>8}")
    for c, (p, r, f1) in enumerate(report.per_class):
        tp, tr = report.topk[c]
        tr_str = f"{100 * tr:>8.2f}" if tr is not None else f"{'n/a':>8}"
        lines.append(f"{c:>6} {100 * p:>8.2f} {100 * r:>8.2f} {100 * f1:>8.2f} "
                     f"{100 * tp:>8.2f} {tr_str}")
    return "\n".join(lines) + "\n"


def write_report(report: MetricReport, json_path: str | Path,
                 text_path: str | Path | None = None, title: str = "") -> None:
    Path(json_path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
    if text_path is not None:
        Path(text_path).write_text(render_report_text(report, title), encoding="utf-8")
