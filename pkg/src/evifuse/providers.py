"""Encoder and pair-scorer providers.

The pipeline talks to encoders through a tiny newline-delimited JSON
protocol so a real model can sit behind a subprocess (stdio) or an HTTP
service, while the builtin feature-hashing embedder keeps everything
runnable with no external process at all.

Embedding protocol   request  {"id": str, "text": str}
                     response {"id": str, "vector": [f32...]}
Pair-score protocol  request  {"id": str, "query": str, "doc": str}
                     response {"id": str, "score": float}

One response line per request line; out-of-order responses are matched by
id. HTTP transports POST the same newline-delimited payloads to /embed and
/score.
"""

from __future__ import annotations

import json
import logging
import subprocess
import time
from typing import Protocol, Sequence

import numpy as np

from .errors import ProviderError, ValidationError
from .storage import fnv1a64

log = logging.getLogger(__name__)

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 0.2  # seconds, doubled per attempt


class Embedder(Protocol):
    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        ...


# ---------------------------------------------------------------------------
# builtin hashing embedder
# ---------------------------------------------------------------------------

class HashingEmbedder:
    """Deterministic bag-of-tokens embedding.

    Lowercased whitespace/punctuation tokenization; each token's FNV-1a
    64-bit hash mod dim increments one component; the vector is then
    L2-normalized. Empty text embeds to the zero vector.
    """

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValidationError(f"embedding dim must be >= 1, got {dim}")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for match in _token_iter(text):
            vec[fnv1a64(match.encode("utf-8")) % self.dim] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        return vec.astype(np.float32)

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


def _token_iter(text: str):
    token = []
    for ch in text.lower():
        if ch.isalnum():
            token.append(ch)
        elif token:
            yield "".join(token)
            token = []
    if token:
        yield "".join(token)


# ---------------------------------------------------------------------------
# wire-protocol clients
# ---------------------------------------------------------------------------

def _parse_response_lines(lines: Sequence[str], expected_ids: set[str],
                          value_key: str) -> dict[str, object]:
    """Match newline-delimited JSON responses to request ids."""
    out: dict[str, object] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderError(f"malformed response line {lineno}: {exc}") from exc
        if "id" not in obj or value_key not in obj:
            raise ProviderError(f"response line {lineno} lacks id/{value_key}")
        rid = str(obj["id"])
        if rid not in expected_ids:
            raise ProviderError(f"response line {lineno} has unknown id {rid!r}")
        out[rid] = obj[value_key]
    missing = expected_ids - set(out)
    if missing:
        raise ProviderError(f"provider returned no response for ids {sorted(missing)[:5]}")
    return out


def _with_retries(action, describe: str):
    delay = RETRY_BASE_DELAY
    last: Exception | None = None
    for attempt in range(RETRY_ATTEMPTS):
        try:
            return action()
        except ProviderError:
            raise  # protocol violations are not transient
        except Exception as exc:
            last = exc
            log.warning("%s failed (attempt %d/%d): %s", describe, attempt + 1,
                        RETRY_ATTEMPTS, exc)
            if attempt + 1 < RETRY_ATTEMPTS:
                time.sleep(delay)
                delay *= 2
    raise ProviderError(f"{describe} failed after {RETRY_ATTEMPTS} attempts: {last}")


class StdioClient:
    """Round-trips request batches through a long-running subprocess."""

    def __init__(self, command: Sequence[str]):
        self.command = list(command)

    def roundtrip(self, requests: list[dict], value_key: str) -> dict[str, object]:
        payload = "".join(json.dumps(r) + "\n" for r in requests)

        def run():
            proc = subprocess.run(
                self.command, input=payload.encode("utf-8"),
                stdout=subprocess.PIPE, stderr=subprocess.PIPE, timeout=300)
            if proc.returncode != 0:
                raise RuntimeError(
                    f"provider exited with {proc.returncode}: "
                    f"{proc.stderr.decode('utf-8', 'replace')[:500]}")
            return proc.stdout.decode("utf-8")

        stdout = _with_retries(run, f"stdio provider {self.command[0]}")
        ids = {str(r["id"]) for r in requests}
        return _parse_response_lines(stdout.splitlines(), ids, value_key)


class HttpClient:
    """POSTs newline-delimited JSON to a provider endpoint."""

    def __init__(self, url: str):
        self.url = url

    def roundtrip(self, requests: list[dict], value_key: str) -> dict[str, object]:
        import requests as requests_lib

        payload = "".join(json.dumps(r) + "\n" for r in requests)

        def run():
            resp = requests_lib.post(
                self.url, data=payload.encode("utf-8"),
                headers={"Content-Type": "application/x-ndjson"}, timeout=300)
            resp.raise_for_status()
            return resp.text

        body = _with_retries(run, f"http provider {self.url}")
        ids = {str(r["id"]) for r in requests}
        return _parse_response_lines(body.splitlines(), ids, value_key)


class ProtocolEmbedder:
    """Embedder backed by a stdio or HTTP provider."""

    def __init__(self, transport: StdioClient | HttpClient, batch_size: int = 64):
        self.transport = transport
        self.batch_size = batch_size

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        vectors: list[np.ndarray] = []
        dim: int | None = None
        for start in range(0, len(texts), self.batch_size):
            chunk = texts[start:start + self.batch_size]
            requests = [{"id": f"t{start + i}", "text": t} for i, t in enumerate(chunk)]
            responses = self.transport.roundtrip(requests, "vector")
            for i in range(len(chunk)):
                raw = responses[f"t{start + i}"]
                if not isinstance(raw, list):
                    raise ProviderError("vector field is not a list")
                vec = np.asarray(raw, dtype=np.float32)
                if dim is None:
                    dim = len(vec)
                elif len(vec) != dim:
                    raise ProviderError(
                        f"embedding dimension drifted: {dim} then {len(vec)}")
                vectors.append(vec)
        return vectors


class ProtocolPairScorer:
    """Pair scorer backed by a stdio or HTTP provider; adapts to rerank's interface."""

    def __init__(self, transport: StdioClient | HttpClient, batch_size: int = 64):
        self.transport = transport
        self.batch_size = batch_size

    def score_texts(self, query_text: str, doc_texts: Sequence[str]) -> list[float]:
        scores: list[float] = []
        for start in range(0, len(doc_texts), self.batch_size):
            chunk = doc_texts[start:start + self.batch_size]
            requests = [{"id": f"p{start + i}", "query": query_text, "doc": d}
                        for i, d in enumerate(chunk)]
            responses = self.transport.roundtrip(requests, "score")
            for i in range(len(chunk)):
                raw = responses[f"p{start + i}"]
                if not isinstance(raw, (int, float)):
                    raise ProviderError("score field is not a number")
                scores.append(float(raw))
        return scores

    def score_pairs(self, query, docs) -> list[float]:
        return self.score_texts(query.raw_text, [d.text for d in docs])


# ---------------------------------------------------------------------------
# protocol conformance harness
# ---------------------------------------------------------------------------

def check_embedding_provider(embedder: Embedder, n_requests: int = 100,
                             seed: int = 0) -> dict:
    """Drive an embedder with random texts (duplicates and empties included)
    and verify schema, dimension constancy, and repeat determinism."""
    rng = np.random.default_rng(seed)
    words = [f"term{i}" for i in range(40)]
    texts = []
    for i in range(n_requests):
        if i % 17 == 0:
            texts.append("")
        else:
            k = int(rng.integers(1, 8))
            texts.append(" ".join(words[int(rng.integers(len(words)))] for _ in range(k)))
    # plant exact duplicates
    for i in range(0, n_requests - 1, 9):
        texts[i + 1] = texts[i]
    vectors = embedder.embed_batch(texts)
    if len(vectors) != n_requests:
        raise ProviderError(f"expected {n_requests} vectors, got {len(vectors)}")
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise ProviderError(f"embedding dimension not constant: {sorted(dims)}")
    for v in vectors:
        if not np.all(np.isfinite(v)):
            raise ProviderError("embedding contains non-finite values")
    by_text: dict[str, np.ndarray] = {}
    for text, vec in zip(texts, vectors):
        if text in by_text and not np.array_equal(by_text[text], vec):
            raise ProviderError(f"repeated text {text!r} produced different vectors")
        by_text[text] = vec
    return {"n_requests": n_requests, "dim": dims.pop(), "distinct_texts": len(by_text)}


def check_pair_scorer(score_texts, n_requests: int = 100, seed: int = 0) -> dict:
    """Drive a `(query, docs) -> scores` callable and verify count and range."""
    rng = np.random.default_rng(seed)
    words = [f"term{i}" for i in range(40)]

    def sentence() -> str:
        k = int(rng.integers(2, 10))
        return " ".join(words[int(rng.integers(len(words)))] for _ in range(k))

    queries = [sentence() for _ in range(max(1, n_requests // 20))]
    total = 0
    for q in queries:
        docs = [sentence() for _ in range(n_requests // len(queries))]
        scores = score_texts(q, docs)
        if len(scores) != len(docs):
            raise ProviderError(f"expected {len(docs)} scores, got {len(scores)}")
        for s in scores:
            if not (0.0 <= float(s) <= 1.0):
                raise ProviderError(f"score {s} outside [0, 1]")
        total += len(scores)
    return {"n_requests": total, "n_queries": len(queries)}
