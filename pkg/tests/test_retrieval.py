"""Sparse/dense ranking against exhaustive references; projection training."""

import math
from collections import Counter

import numpy as np
import pytest

from evifuse.corpus import Document, OutcomeSpec, TfidfStats, build_index
from evifuse.errors import ValidationError
from evifuse.notes import Query
from evifuse.retrieval import (
    BiencoderConfig, ProjectionPair, dense_retrieve, dense_score, sparse_retrieve,
    tfidf_vector, train_biencoder, triplet_loss, triplet_loss_grads,
)
from oracles import oracle_sparse_ranking, reference_tfidf


class TestTfidfVector:
    def test_single_term_normalizes_to_one(self):
        stats = TfidfStats(doc_count=10, doc_freq={"t": 3})
        vec = tfidf_vector(Counter({"t": 1}), stats)
        assert vec == {"t": 1.0}

    def test_idf_formula_at_df_equals_n(self):
        stats = TfidfStats(doc_count=1, doc_freq={"t": 1})
        from evifuse.retrieval import idf
        assert idf("t", stats) == pytest.approx(1.0)

    def test_unknown_terms_get_df_zero(self):
        stats = TfidfStats(doc_count=9, doc_freq={})
        from evifuse.retrieval import idf
        assert idf("unseen", stats) == pytest.approx(math.log(10.0) + 1.0)

    def test_empty_multiset_yields_empty_vector(self):
        assert tfidf_vector(Counter(), TfidfStats(5, {})) == {}

    def test_matches_reference_computation(self):
        rng = np.random.default_rng(17)
        vocab = [f"t{i}" for i in range(40)]
        doc_freq = {t: int(rng.integers(0, 101)) for t in vocab}
        stats = TfidfStats(doc_count=100, doc_freq=doc_freq)
        for _ in range(50):
            terms = Counter({vocab[int(rng.integers(40))]: int(rng.integers(1, 5))
                             for _ in range(int(rng.integers(1, 10)))})
            got = tfidf_vector(terms, stats)
            want = reference_tfidf(terms, stats)
            assert set(got) == set(want)
            for t in got:
                assert got[t] == pytest.approx(want[t], abs=1e-15)


def build_random_index(rng, n_docs, vocab_size=25):
    vocab = [f"t{i}" for i in range(vocab_size)]
    docs = []
    for j in range(n_docs):
        terms = Counter({"keep": 1})
        for _ in range(int(rng.integers(1, 8))):
            terms[vocab[int(rng.integers(vocab_size))]] += 1
        docs.append(Document(f"d{j:05d}", "", "", mesh_terms=terms))
    spec = OutcomeSpec("SYN", 2, ["a", "b"], [["keep"]])
    return build_index(docs, spec), vocab


class TestSparseRetrieve:
    def test_identical_terms_rank_first_with_cosine_one(self):
        docs = [
            Document("a", "", "", mesh_terms=Counter({"x": 2, "y": 1})),
            Document("b", "", "", mesh_terms=Counter({"z": 1})),
            Document("c", "", "", mesh_terms=Counter({"w": 3})),
        ]
        spec = OutcomeSpec("S", 2, ["p", "q"], [["x"], ["z"], ["w"]])
        index = build_index(docs, spec)
        query = Query("q1", Counter({"x": 2, "y": 1}), "")
        ranking = sparse_retrieve(query, index, 3)
        assert ranking.entries[0][0] == "a"
        assert ranking.entries[0][1] == pytest.approx(1.0, abs=1e-12)

    def test_empty_query_gives_empty_ranking(self):
        rng = np.random.default_rng(1)
        index, _ = build_random_index(rng, 20)
        ranking = sparse_retrieve(Query("q", Counter(), ""), index, 5)
        assert ranking.entries == []

    def test_nonpositive_n_rejected(self):
        rng = np.random.default_rng(1)
        index, _ = build_random_index(rng, 5)
        with pytest.raises(ValidationError):
            sparse_retrieve(Query("q", Counter({"t0": 1}), ""), index, 0)

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(29)
        index, vocab = build_random_index(rng, 200)
        for _ in range(20):
            terms = Counter({vocab[int(rng.integers(len(vocab)))]: int(rng.integers(1, 4))
                             for _ in range(int(rng.integers(1, 6)))})
            got = sparse_retrieve(Query("q", terms, ""), index, 20).entries
            want = [e for e in oracle_sparse_ranking(terms, index, 20) if e[1] > 0.0]
            want = want[:20]
            assert got == want

    def test_cosine_bounded_zero_one(self):
        rng = np.random.default_rng(31)
        index, vocab = build_random_index(rng, 100)
        for _ in range(10):
            terms = Counter({vocab[int(rng.integers(len(vocab)))]: 1 for _ in range(4)})
            for _, score in sparse_retrieve(Query("q", terms, ""), index, 100).entries:
                assert -1e-12 <= score <= 1.0 + 1e-12


class TestDenseRetrieve:
    def test_three_four_five(self):
        assert dense_score(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)

    def test_zero_distance_for_equal_vectors(self):
        v = np.array([1.5, -2.5, 0.25])
        assert dense_score(v, v) == 0.0

    def test_dimension_mismatch_names_both(self):
        with pytest.raises(ValidationError, match="2.*3"):
            dense_score(np.zeros(2), np.zeros(3))

    def test_matches_elementwise_reference(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            q = rng.normal(size=32)
            d = rng.normal(size=32)
            want = math.sqrt(sum((qi - di) ** 2 for qi, di in zip(q, d)))
            assert dense_score(q, d) == pytest.approx(want, abs=1e-12)

    def test_exact_match_ranks_first(self):
        embs = {"A": np.array([1.0, 0.0]), "B": np.array([0.0, 1.0])}
        ranking = dense_retrieve(np.array([1.0, 0.0]), embs, 2)
        assert ranking.doc_ids() == ["A", "B"]
        assert ranking.entries[0][1] == 0.0  # -distance

    def test_equidistant_ties_break_by_doc_id(self):
        embs = {"B": np.array([0.0, 1.0]), "A": np.array([0.0, -1.0])}
        ranking = dense_retrieve(np.array([0.0, 0.0]), embs, 2)
        assert ranking.doc_ids() == ["A", "B"]

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(43)
        embs = {f"d{j:04d}": rng.normal(size=16) for j in range(500)}
        for _ in range(10):
            q = rng.normal(size=16)
            got = dense_retrieve(q, embs, 10)
            want = sorted(((doc_id, float(np.linalg.norm(q - v)))
                           for doc_id, v in embs.items()), key=lambda e: (e[1], e[0]))[:10]
            assert got.entries == [(doc_id, -dist) for doc_id, dist in want]

    def test_full_n_returns_total_order(self):
        rng = np.random.default_rng(47)
        embs = {f"d{j}": rng.normal(size=4) for j in range(50)}
        ranking = dense_retrieve(rng.normal(size=4), embs, 100)
        assert sorted(ranking.doc_ids()) == sorted(embs)
        scores = [s for _, s in ranking.entries]
        assert all(a >= b for a, b in zip(scores, scores[1:]))


class TestTripletLoss:
    def test_zero_when_margin_satisfied(self):
        proj = ProjectionPair.identity(2, margin=0.5)
        q = np.array([0.0, 0.0])
        pos = np.array([0.2, 0.0])   # distance 0.2
        neg = np.array([0.9, 0.0])   # distance 0.9
        assert triplet_loss(q, pos, neg, proj) == 0.0

    def test_arithmetic_when_margin_violated(self):
        proj = ProjectionPair.identity(2, margin=0.5)
        q = np.array([0.0, 0.0])
        pos = np.array([1.0, 0.0])
        neg = np.array([0.8, 0.0])
        assert triplet_loss(q, pos, neg, proj) == pytest.approx(0.7)

    def test_margin_must_be_positive(self):
        with pytest.raises(ValidationError):
            ProjectionPair.identity(2, margin=0.0)

    def test_nonnegative_and_zero_iff_margin_met(self):
        rng = np.random.default_rng(53)
        proj = ProjectionPair(rng.normal(size=(4, 4)), rng.normal(size=(4, 4)), 0.3)
        for _ in range(100):
            q, pos, neg = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
            loss = triplet_loss(q, pos, neg, proj)
            s_pos, s_neg = proj.score(q, pos), proj.score(q, neg)
            assert loss >= 0.0
            assert (loss == 0.0) == (s_pos + proj.margin <= s_neg)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(59)
        h = 1e-5
        checked = 0
        while checked < 100:
            dim = 3
            proj = ProjectionPair(np.eye(dim) + 0.1 * rng.normal(size=(dim, dim)),
                                  np.eye(dim) + 0.1 * rng.normal(size=(dim, dim)),
                                  margin=float(rng.uniform(0.1, 1.0)))
            q, pos, neg = rng.normal(size=dim), rng.normal(size=dim), rng.normal(size=dim)
            loss, g_wq, g_wd = triplet_loss_grads(q, pos, neg, proj)
            if loss < 1e-3:  # keep away from the hinge kink
                continue
            checked += 1
            for grad, attr in ((g_wq, "w_query"), (g_wd, "w_doc")):
                matrix = getattr(proj, attr)
                i = int(rng.integers(dim))
                j = int(rng.integers(dim))
                bumped_up = matrix.copy()
                bumped_up[i, j] += h
                bumped_dn = matrix.copy()
                bumped_dn[i, j] -= h
                up = ProjectionPair(**{**_proj_kwargs(proj), attr: bumped_up})
                dn = ProjectionPair(**{**_proj_kwargs(proj), attr: bumped_dn})
                numeric = (triplet_loss(q, pos, neg, up) - triplet_loss(q, pos, neg, dn)) / (2 * h)
                denom = max(abs(numeric), abs(grad[i, j]), 1e-8)
                assert abs(grad[i, j] - numeric) / denom < 1e-5


def _proj_kwargs(proj):
    return {"w_query": proj.w_query, "w_doc": proj.w_doc, "margin": proj.margin}


class TestTrainBiencoder:
    def test_zero_loss_fixed_point_leaves_projections_unchanged(self):
        rng = np.random.default_rng(61)
        dim = 6
        queries = {f"q{i}": rng.normal(size=dim) for i in range(5)}
        docs = {}
        triples = []
        for i, (qid, q) in enumerate(sorted(queries.items())):
            docs[f"p{i}"] = q.copy()                       # positive identical to query
            ortho = np.zeros(dim)
            ortho[i % dim] = 10.0
            docs[f"n{i}"] = q + ortho                      # negative far away
            triples.append((qid, f"p{i}", f"n{i}"))
        config = BiencoderConfig(learning_rate=0.1, epochs=10, margin=0.5, seed=0)
        proj = train_biencoder(triples, queries, docs, config)
        assert np.array_equal(proj.w_query, np.eye(dim))
        assert np.array_equal(proj.w_doc, np.eye(dim))

    def test_training_improves_precision_on_rotated_structure(self):
        # Positives live in a rotated copy of the query space, so under the
        # identity projections the nearby noise negatives win; a learned
        # linear map can undo the rotation and must recover the positives.
        rng = np.random.default_rng(67)
        dim = 8
        rotation = np.zeros((dim, dim))
        for b in range(0, dim, 2):  # 90-degree rotation in every plane
            rotation[b, b + 1] = -1.0
            rotation[b + 1, b] = 1.0
        queries, docs, train_triples, heldout = {}, {}, [], []
        for i in range(40):
            q = rng.normal(size=dim)
            queries[f"q{i}"] = q
            docs[f"p{i}"] = rotation @ q
            docs[f"n{i}"] = q + 0.1 * rng.normal(size=dim)  # near the query as-is
            (train_triples if i < 30 else heldout).append((f"q{i}", f"p{i}", f"n{i}"))

        def precision_at_1(proj):
            hits = 0
            for qid, pos_id, neg_id in heldout:
                s_pos = proj.score(queries[qid], docs[pos_id])
                s_neg = proj.score(queries[qid], docs[neg_id])
                hits += int(s_pos < s_neg)
            return hits / len(heldout)

        before = precision_at_1(ProjectionPair.identity(dim, margin=1.0))
        config = BiencoderConfig(learning_rate=0.05, epochs=200, margin=1.0, seed=3)
        proj = train_biencoder(train_triples, queries, docs, config)
        after = precision_at_1(proj)
        assert before < 0.5
        assert after > before

    def test_final_loss_never_exceeds_initial(self):
        rng = np.random.default_rng(71)
        dim = 5
        queries = {f"q{i}": rng.normal(size=dim) for i in range(10)}
        docs = {f"d{i}": rng.normal(size=dim) for i in range(20)}
        triples = [(f"q{i}", f"d{i}", f"d{i + 10}") for i in range(10)]
        config = BiencoderConfig(learning_rate=0.05, epochs=30, margin=0.5, seed=1)
        proj = train_biencoder(triples, queries, docs, config)
        initial = np.mean([triplet_loss(queries[q], docs[p], docs[n],
                                        ProjectionPair.identity(dim, 0.5))
                           for q, p, n in triples])
        final = np.mean([triplet_loss(queries[q], docs[p], docs[n], proj)
                         for q, p, n in triples])
        assert final <= initial + 1e-12

    def test_same_seed_is_bit_identical(self):
        rng = np.random.default_rng(73)
        dim = 4
        queries = {f"q{i}": rng.normal(size=dim) for i in range(6)}
        docs = {f"d{i}": rng.normal(size=dim) for i in range(12)}
        triples = [(f"q{i}", f"d{i}", f"d{i + 6}") for i in range(6)]
        config = BiencoderConfig(learning_rate=0.02, epochs=20, margin=0.5, seed=42)
        p1 = train_biencoder(triples, queries, docs, config)
        p2 = train_biencoder(triples, queries, docs, config)
        assert np.array_equal(p1.w_query, p2.w_query)
        assert np.array_equal(p1.w_doc, p2.w_doc)

    def test_empty_triples_rejected(self):
        with pytest.raises(ValidationError):
            train_biencoder([], {}, {}, BiencoderConfig())


class TestTrainingDataIngestion:
    def test_triples_tsv_roundtrip(self, tmp_path):
        from evifuse.retrieval import read_triples_tsv
        path = tmp_path / "triples.tsv"
        path.write_text("q1\tp1\tn1\n# comment\nq2\tp2\tn2\n")
        assert read_triples_tsv(path) == [("q1", "p1", "n1"), ("q2", "p2", "n2")]

    def test_malformed_triple_line_reports_location(self, tmp_path):
        from evifuse.errors import IngestionError
        from evifuse.retrieval import read_triples_tsv
        path = tmp_path / "triples.tsv"
        path.write_text("q1\tp1\n")
        with pytest.raises(IngestionError, match="triples.tsv:1"):
            read_triples_tsv(path)

    def test_judgments_tsv_and_triple_generation(self, tmp_path):
        from evifuse.retrieval import read_judgments_tsv, triples_from_judgments
        path = tmp_path / "judgments.tsv"
        path.write_text("q1\td1\t2\nq1\td2\t0\nq1\td3\t1\nq2\td4\t1\n")
        judgments = read_judgments_tsv(path)
        assert judgments == {"q1": {"d1": 2, "d2": 0, "d3": 1}, "q2": {"d4": 1}}
        triples = triples_from_judgments(judgments, seed=0, per_query=4)
        assert len(triples) == 4  # q2 has no negatives, so only q1 contributes
        for qid, pos, neg in triples:
            assert qid == "q1"
            assert judgments[qid][pos] > 0
            assert judgments[qid][neg] == 0
