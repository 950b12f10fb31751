"""Metric routines against exhaustive pair-counting and confusion oracles."""

import math

import numpy as np
import pytest

from evifuse.errors import ValidationError
from evifuse.metrics import (
    auroc, confidence_increase_filter, cross_validated_precision, diversity_report,
    evaluate_predictions, f1_scores, kfold_splits, multiclass_auroc,
    render_report_text, retrieval_precision_at_k, topk_precision_recall,
)
from evifuse.predictor import AggregationStrategy, PredictionRecord
from evifuse.rerank import EvidenceSet
from oracles import oracle_auroc, oracle_f1


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0

    def test_full_tie(self):
        assert auroc([0.5, 0.5], [1, 0]) == 0.5

    def test_single_class_is_an_error(self):
        with pytest.raises(ValidationError, match="undefined"):
            auroc([0.1, 0.9], [1, 1])

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = 200
            scores = np.round(rng.random(n), 2)  # rounding forces ties
            labels = (rng.random(n) < 0.4).astype(int)
            if labels.sum() in (0, n):
                continue
            got = auroc(scores, labels)
            want = oracle_auroc(list(scores), list(labels))
            assert got == pytest.approx(want, abs=1e-12)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(5)
        scores = rng.random(100)
        labels = (rng.random(100) < 0.5).astype(int)
        base = auroc(scores, labels)
        for transform in (lambda s: 3 * s + 2, np.exp, lambda s: s ** 3):
            assert auroc(transform(scores), labels) == pytest.approx(base, abs=1e-12)

    def test_multiclass_macro_one_vs_rest(self):
        rng = np.random.default_rng(7)
        n, c = 120, 4
        probs = rng.dirichlet(np.ones(c), size=n)
        labels = rng.integers(0, c, size=n)
        got = multiclass_auroc(probs, labels)
        per_class = [oracle_auroc(list(probs[:, k]), list((labels == k).astype(int)))
                     for k in range(c)]
        assert got == pytest.approx(float(np.mean(per_class)), abs=1e-12)


class TestF1:
    def test_perfect_classifier(self):
        micro, macro, _ = f1_scores([0, 1, 2, 1], [0, 1, 2, 1])
        assert micro == 1.0 and macro == 1.0

    def test_degenerate_all_one_class(self):
        labels = [0] * 5 + [1] * 5
        predictions = [0] * 10
        micro, macro, per_class = f1_scores(predictions, labels, class_count=2)
        assert micro == pytest.approx(0.5)
        assert per_class[0][2] == pytest.approx(2 * 0.5 * 1.0 / 1.5)
        assert per_class[1][2] == 0.0
        assert macro == pytest.approx((2 / 3) / 2)

    def test_matches_confusion_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n, c = int(rng.integers(20, 300)), 4
            predictions = rng.integers(0, c, size=n)
            labels = rng.integers(0, c, size=n)
            got = f1_scores(predictions, labels, c)
            want = oracle_f1(predictions, labels, c)
            assert got[0] == pytest.approx(want[0], abs=1e-12)
            assert got[1] == pytest.approx(want[1], abs=1e-12)
            for grow, wrow in zip(got[2], want[2]):
                assert grow == pytest.approx(wrow, abs=1e-12)

    def test_micro_equals_accuracy(self):
        rng = np.random.default_rng(13)
        predictions = rng.integers(0, 3, size=100)
        labels = rng.integers(0, 3, size=100)
        micro, _, _ = f1_scores(predictions, labels, 3)
        assert micro == pytest.approx(float(np.mean(predictions == labels)), abs=1e-12)

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValidationError):
            f1_scores([], [])


def make_records(probs_matrix, strategy=AggregationStrategy.NOTE_ONLY):
    return [PredictionRecord.from_probs(f"n{i:04d}", row, [], strategy)
            for i, row in enumerate(probs_matrix)]


class TestTopkPrecisionRecall:
    def test_counting(self):
        rng = np.random.default_rng(17)
        # 100 records; top-10 by class-1 confidence contains exactly 7 true members
        probs = np.zeros((100, 2))
        probs[:, 1] = np.linspace(0.99, 0.0, 100)
        probs[:, 0] = 1 - probs[:, 1]
        labels = {}
        for i in range(100):
            if i < 10:
                labels[f"n{i:04d}"] = 1 if i < 7 else 0
            else:
                labels[f"n{i:04d}"] = int(rng.random() < 0.2)
        records = make_records(probs)
        precision, recall = topk_precision_recall(records, labels, target_class=1)
        assert precision == pytest.approx(0.7)
        total_true = sum(labels.values())
        assert recall == pytest.approx(7 / total_true)

    def test_perfectly_confident_classifier(self):
        labels = {f"n{i:04d}": i % 3 for i in range(60)}
        probs = np.zeros((60, 3))
        for i in range(60):
            probs[i, i % 3] = 1.0
        records = make_records(probs)
        for c in range(3):
            precision, _ = topk_precision_recall(records, labels, c)
            assert precision == 1.0

    def test_matches_sort_and_count_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            n = int(rng.integers(20, 150))
            probs = rng.dirichlet(np.ones(3), size=n)
            records = make_records(probs)
            labels = {r.note_id: int(rng.integers(3)) for r in records}
            c = int(rng.integers(3))
            got_p, got_r = topk_precision_recall(records, labels, c)
            n_sel = math.ceil(0.10 * n)
            order = sorted(range(n), key=lambda i: (-probs[i, c], f"n{i:04d}"))
            chosen = order[:n_sel]
            hits = sum(1 for i in chosen if labels[f"n{i:04d}"] == c)
            truths = sum(1 for i in range(n) if labels[f"n{i:04d}"] == c)
            assert got_p == pytest.approx(hits / n_sel, abs=1e-12)
            if truths:
                assert got_r == pytest.approx(hits / truths, abs=1e-12)
            else:
                assert got_r is None

    def test_fraction_one_selects_everything(self):
        rng = np.random.default_rng(23)
        probs = rng.dirichlet(np.ones(2), size=40)
        records = make_records(probs)
        labels = {r.note_id: int(rng.integers(2)) for r in records}
        precision, _ = topk_precision_recall(records, labels, 1, fraction=1.0)
        want = sum(1 for r in records if labels[r.note_id] == 1) / len(records)
        assert precision == pytest.approx(want)


class TestConfidenceIncreaseFilter:
    def test_threshold_arithmetic(self):
        base = make_records(np.array([[0.5, 0.5]]))
        kept_aug = make_records(np.array([[0.56, 0.44]]))
        labels = {"n0000": 0}
        out = confidence_increase_filter(kept_aug, base, labels)
        assert out == {0: 1.0}

    def test_boundary_is_strict(self):
        base = make_records(np.array([[0.5, 0.5]]))
        aug = make_records(np.array([[0.55, 0.45]]))
        out = confidence_increase_filter(aug, base, {"n0000": 0})
        assert out == {}

    def test_matches_filter_oracle(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            n = 80
            base_probs = rng.dirichlet(np.ones(3), size=n)
            aug_probs = rng.dirichlet(np.ones(3), size=n)
            base = make_records(base_probs)
            aug = make_records(aug_probs)
            labels = {f"n{i:04d}": int(rng.integers(3)) for i in range(n)}
            got = confidence_increase_filter(aug, base, labels)
            kept_by_class = {}
            for i in range(n):
                c = int(np.argmax(aug_probs[i]))
                if aug_probs[i, c] > base_probs[i, c] * 1.1:
                    kept_by_class.setdefault(c, []).append(i)
            want = {c: sum(1 for i in rows if labels[f"n{i:04d}"] == c) / len(rows)
                    for c, rows in kept_by_class.items()}
            assert got == pytest.approx(want)


class TestRetrievalPrecision:
    def test_all_relevant(self):
        ranking = [f"d{i}" for i in range(10)]
        judgments = {d: 1 for d in ranking}
        assert retrieval_precision_at_k(ranking, judgments, 10) == 1.0

    def test_counting_with_unjudged_as_irrelevant(self):
        ranking = [f"d{i}" for i in range(10)]
        judgments = {"d0": 1, "d1": 1, "d2": 1, "d3": 1, "d4": 0}
        assert retrieval_precision_at_k(ranking, judgments, 10) == pytest.approx(0.4)

    def test_k_validated(self):
        with pytest.raises(ValidationError):
            retrieval_precision_at_k(["a"], {}, 0)

    def test_fold_machinery_by_enumeration(self):
        ids = [f"q{i}" for i in range(10)]
        folds = kfold_splits(ids, 5)
        assert len(folds) == 5
        assert all(len(f) == 2 for f in folds)
        flat = [q for f in folds for q in f]
        assert sorted(flat) == sorted(ids)
        assert flat == sorted(ids)  # deterministic contiguous assignment
        # uneven split: sizes differ by at most one
        folds7 = kfold_splits([f"q{i}" for i in range(17)], 5)
        assert [len(f) for f in folds7] == [4, 4, 3, 3, 3]

    def test_cross_validation_means(self):
        ids = [f"q{i}" for i in range(10)]
        judgments = {q: {f"{q}_d{j}": int(j < 3) for j in range(5)} for q in ids}

        def factory(train_ids):
            def ranker(qid):
                return [f"{qid}_d{j}" for j in range(5)]
            return ranker

        mean, fold_means = cross_validated_precision(ids, judgments, factory,
                                                     n_folds=5, k=5)
        assert mean == pytest.approx(0.6)
        assert fold_means == [pytest.approx(0.6)] * 5


class TestDiversityReport:
    def test_degenerate_concentration(self):
        sets = [EvidenceSet(f"n{i}", [("d0", 0.5)], 1) for i in range(8)]
        report = diversity_report(sets)
        assert report.histogram == [("d0", 1.0)]

    def test_uniform_dispersion(self):
        sets = [EvidenceSet(f"n{i}", [(f"d{i}", 0.5)], 1) for i in range(6)]
        report = diversity_report(sets)
        assert all(frac == pytest.approx(1 / 6) for _, frac in report.histogram)

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(31)
        sets = []
        for i in range(50):
            k = int(rng.integers(1, 6))
            ids = sorted({f"d{int(rng.integers(30)):03d}" for _ in range(k)})
            sets.append(EvidenceSet(f"n{i}", [(d, 0.5) for d in ids], k))
        report = diversity_report(sets, top_n=100)
        counts = {}
        for ev in sets:
            for doc_id, _ in ev.items:
                counts[doc_id] = counts.get(doc_id, 0) + 1
        want = sorted(((d, c / 50) for d, c in counts.items()),
                      key=lambda e: (-e[1], e[0]))
        assert report.histogram == [(d, pytest.approx(f)) for d, f in want]
        fracs = [f for _, f in report.histogram]
        assert all(a >= b for a, b in zip(fracs, fracs[1:]))
        assert all(0 < f <= 1 for f in fracs)


class TestAssembledReport:
    def test_report_fields_and_rendering(self):
        rng = np.random.default_rng(37)
        n = 50
        probs = rng.dirichlet(np.ones(2), size=n)
        records = make_records(probs)
        labels = {r.note_id: int(rng.integers(2)) for r in records}
        report = evaluate_predictions(records, labels, class_count=2)
        assert report.n == n
        assert 0.0 <= report.auroc <= 1.0
        assert 0.0 <= report.micro_f1 <= 1.0
        assert len(report.per_class) == 2
        text = render_report_text(report, title="demo")
        assert "AUROC" in text and "Micro F1" in text
