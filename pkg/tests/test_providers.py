"""Builtin hashing embedder and the provider wire protocol."""

import sys
from pathlib import Path

import numpy as np
import pytest

from evifuse.errors import ProviderError, ValidationError
from evifuse.providers import (
    HashingEmbedder, ProtocolEmbedder, ProtocolPairScorer, StdioClient,
    check_embedding_provider, check_pair_scorer,
)
from evifuse.storage import fnv1a64

TOY = [sys.executable, str(Path(__file__).parent / "toy_provider.py")]


class TestHashingEmbedder:
    def test_repeated_token_lands_in_one_bucket(self):
        emb = HashingEmbedder(dim=8)
        vec = emb.embed("pain pain")
        nonzero = np.nonzero(vec)[0]
        assert len(nonzero) == 1
        assert vec[nonzero[0]] == pytest.approx(1.0)

    def test_bucket_is_fnv1a_mod_dim(self):
        emb = HashingEmbedder(dim=8)
        vec = emb.embed("pain pain")
        assert np.nonzero(vec)[0][0] == fnv1a64(b"pain") % 8

    def test_empty_text_is_zero_vector(self):
        emb = HashingEmbedder(dim=16)
        np.testing.assert_array_equal(emb.embed(""), np.zeros(16, dtype=np.float32))
        np.testing.assert_array_equal(emb.embed(" .,;"), np.zeros(16, dtype=np.float32))

    def test_deterministic(self):
        emb = HashingEmbedder(dim=32)
        a = emb.embed("chest pain and fever")
        b = emb.embed("chest pain and fever")
        np.testing.assert_array_equal(a, b)

    def test_unit_norm_for_nonempty_text(self):
        emb = HashingEmbedder(dim=64)
        rng = np.random.default_rng(3)
        words = [f"w{i}" for i in range(30)]
        for _ in range(20):
            text = " ".join(words[int(rng.integers(30))]
                            for _ in range(int(rng.integers(1, 12))))
            assert np.linalg.norm(emb.embed(text)) == pytest.approx(1.0, abs=1e-6)

    def test_tokenization_lowercases_and_splits_punctuation(self):
        emb = HashingEmbedder(dim=128)
        np.testing.assert_array_equal(emb.embed("Chest-Pain!"), emb.embed("chest pain"))

    def test_disjoint_buckets_are_orthogonal(self):
        emb = HashingEmbedder(dim=4096)  # collisions unlikely at this dim
        a, b = emb.embed("alpha"), emb.embed("beta")
        if np.argmax(a) != np.argmax(b):
            assert float(a @ b) == 0.0

    def test_dim_validated(self):
        with pytest.raises(ValidationError):
            HashingEmbedder(dim=0)

    def test_conformance_harness_passes(self):
        report = check_embedding_provider(HashingEmbedder(dim=32), n_requests=100)
        assert report["n_requests"] == 100
        assert report["dim"] == 32


class TestStdioProtocol:
    def test_embedding_roundtrip_with_out_of_order_responses(self):
        embedder = ProtocolEmbedder(StdioClient(TOY), batch_size=16)
        texts = [f"text number {i}" for i in range(40)] + ["text number 0"]
        vectors = embedder.embed_batch(texts)
        assert len(vectors) == 41
        assert all(len(v) == 6 for v in vectors)
        np.testing.assert_array_equal(vectors[0], vectors[40])  # same text, same vector

    def test_scorer_roundtrip(self):
        scorer = ProtocolPairScorer(StdioClient(TOY), batch_size=8)
        scores = scorer.score_texts("a query", [f"doc {i}" for i in range(20)])
        assert len(scores) == 20
        assert all(0.0 <= s <= 1.0 for s in scores)

    def test_malformed_line_reports_line_number(self):
        embedder = ProtocolEmbedder(StdioClient(TOY + ["--mangle"]))
        with pytest.raises(ProviderError, match="line"):
            embedder.embed_batch([f"t{i}" for i in range(9)])

    def test_missing_responses_detected(self):
        embedder = ProtocolEmbedder(StdioClient(TOY + ["--drop"]))
        with pytest.raises(ProviderError, match="no response"):
            embedder.embed_batch([f"t{i}" for i in range(9)])

    def test_unreachable_command_fails_after_retries(self):
        embedder = ProtocolEmbedder(StdioClient(["/nonexistent/provider"]))
        with pytest.raises(ProviderError, match="3 attempts"):
            embedder.embed_batch(["hello"])

    def test_harness_accepts_toy_provider(self):
        report = check_embedding_provider(ProtocolEmbedder(StdioClient(TOY)),
                                          n_requests=100)
        assert report["dim"] == 6
        scorer = ProtocolPairScorer(StdioClient(TOY))
        score_report = check_pair_scorer(scorer.score_texts, n_requests=100)
        assert score_report["n_requests"] >= 100

    def test_harness_rejects_out_of_range_scores(self):
        scorer = ProtocolPairScorer(StdioClient(TOY + ["--wild"]))
        with pytest.raises(ProviderError, match="outside"):
            check_pair_scorer(scorer.score_texts, n_requests=40)
