"""Adapter conformance against the primary pipeline's provider harness."""

import json
import socket
import subprocess
import sys
import time

import numpy as np
import pytest

from evifuse.providers import (
    HttpClient, ProtocolEmbedder, ProtocolPairScorer, StdioClient,
    check_embedding_provider, check_pair_scorer,
)

from evifuse_adapter.encoder import ProviderConfig, TextEncoder
from evifuse_adapter.server import Provider


def adapter_command(model_dir, endpoint):
    return [sys.executable, "-m", "evifuse_adapter.cli", "--model", model_dir,
            "--stdio", "--endpoint", endpoint, "--max-length", "32"]


class TestStdioConformance:
    def test_embedding_endpoint_passes_harness(self, tiny_model_dir):
        embedder = ProtocolEmbedder(StdioClient(adapter_command(tiny_model_dir, "embed")),
                                    batch_size=128)
        report = check_embedding_provider(embedder, n_requests=100)
        assert report["n_requests"] == 100
        assert report["dim"] == 32


@pytest.fixture(scope="module")
def http_adapter(tiny_model_dir):
    proc = subprocess.Popen(
        [sys.executable, "-m", "evifuse_adapter.cli", "--model", tiny_model_dir,
         "--http", "0", "--endpoint", "both", "--max-length", "32"],
        stderr=subprocess.PIPE, text=True)
    url = None
    for _ in range(100):  # library warnings may precede the serving line
        line = proc.stderr.readline()
        if not line:
            break
        try:
            url = json.loads(line)["serving"]
            break
        except (json.JSONDecodeError, KeyError):
            continue
    assert url, "adapter did not announce its address"
    # wait until the socket accepts
    host, port = url.replace("http://", "").split(":")
    for _ in range(50):
        try:
            socket.create_connection((host, int(port)), timeout=1).close()
            break
        except OSError:
            time.sleep(0.1)
    yield url
    proc.terminate()
    proc.wait(timeout=10)


class TestHttpConformance:
    def test_scoring_endpoint_passes_harness(self, http_adapter):
        scorer = ProtocolPairScorer(HttpClient(http_adapter + "/score"), batch_size=64)
        report = check_pair_scorer(scorer.score_texts, n_requests=100)
        assert report["n_requests"] >= 100

    def test_embedding_endpoint_over_http(self, http_adapter):
        embedder = ProtocolEmbedder(HttpClient(http_adapter + "/embed"), batch_size=64)
        report = check_embedding_provider(embedder, n_requests=100)
        assert report["dim"] == 32


@pytest.fixture(scope="module")
def provider(tiny_model_dir):
    return Provider(ProviderConfig(model=tiny_model_dir, max_length=32))


class TestProviderSemantics:
    def test_repeated_text_identical_within_session(self, provider):
        lines = [json.dumps({"id": "a", "text": "term1 term2 term3"}),
                 json.dumps({"id": "b", "text": "term9"}),
                 json.dumps({"id": "c", "text": "term1 term2 term3"})]
        out = {json.loads(r)["id"]: json.loads(r)["vector"]
               for r in provider.handle_lines(lines)}
        assert out["a"] == out["c"]
        assert out["a"] != out["b"]

    def test_empty_text_is_flagged(self, provider):
        responses = provider.handle_lines([json.dumps({"id": "x", "text": ""})])
        obj = json.loads(responses[0])
        assert obj.get("empty") is True
        assert len(obj["vector"]) == 32

    def test_duplicate_request_ids_each_get_a_response(self, provider):
        lines = [json.dumps({"id": "dup", "query": "term1", "doc": "term2"}),
                 json.dumps({"id": "dup", "query": "term1", "doc": "term3"})]
        responses = [json.loads(r) for r in provider.handle_lines(lines)]
        assert [r["id"] for r in responses] == ["dup", "dup"]
        assert all(0.0 <= r["score"] <= 1.0 for r in responses)

    def test_mixed_batch_serves_both_endpoints(self, provider):
        lines = [json.dumps({"id": "e", "text": "term5"}),
                 json.dumps({"id": "s", "query": "term5", "doc": "term6"})]
        responses = [json.loads(r) for r in provider.handle_lines(lines)]
        kinds = {r["id"]: ("vector" in r, "score" in r) for r in responses}
        assert kinds == {"e": (True, False), "s": (False, True)}

    def test_malformed_request_rejected(self, provider):
        with pytest.raises(ValueError, match="line 1"):
            provider.handle_lines(["{broken"])
        with pytest.raises(ValueError, match="neither"):
            provider.handle_lines([json.dumps({"id": "x"})])


class TestEncoder:
    def test_truncation_counter(self, tiny_model_dir):
        encoder = TextEncoder(ProviderConfig(model=tiny_model_dir, max_length=16))
        encoder.encode(["term1 " * 40])
        assert encoder.truncated_count == 1
        encoder.encode(["term2"])
        assert encoder.truncated_count == 1

    def test_pooling_modes_differ_but_share_dim(self, tiny_model_dir):
        cls_enc = TextEncoder(ProviderConfig(model=tiny_model_dir, pooling="cls",
                                             max_length=32))
        mean_enc = TextEncoder(ProviderConfig(model=tiny_model_dir, pooling="mean",
                                              max_length=32))
        (v_cls, _), = cls_enc.encode(["term1 term2 term3"])
        (v_mean, _), = mean_enc.encode(["term1 term2 term3"])
        assert v_cls.shape == v_mean.shape == (32,)
        assert not np.array_equal(v_cls, v_mean)

    def test_batch_composition_does_not_change_vectors(self, tiny_model_dir):
        enc = TextEncoder(ProviderConfig(model=tiny_model_dir, batch_size=4,
                                         max_length=32))
        alone = TextEncoder(ProviderConfig(model=tiny_model_dir, batch_size=4,
                                           max_length=32))
        texts = [f"term{i} term{i + 1}" for i in range(10)]
        batched = enc.encode(texts)
        (solo, _), = alone.encode([texts[3]])
        np.testing.assert_array_equal(batched[3][0], solo)

    def test_bad_model_path_is_a_startup_error(self):
        with pytest.raises(RuntimeError, match="cannot load"):
            TextEncoder(ProviderConfig(model="/nonexistent/model"))


class TestCliStartup:
    def test_startup_error_is_machine_readable(self):
        proc = subprocess.run(
            [sys.executable, "-m", "evifuse_adapter.cli", "--model",
             "/nonexistent/model", "--stdio"],
            input="", capture_output=True, text=True)
        assert proc.returncode == 2
        err = json.loads(proc.stderr.strip().splitlines()[-1])
        assert err["kind"] == "startup"
