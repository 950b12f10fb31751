"""Protocol frontends: newline-delimited JSON over stdio or HTTP.

Requests  {"id": str, "text": str}            -> {"id": str, "vector": [f32...]}
          {"id": str, "query": str, "doc": str} -> {"id": str, "score": float}

One response line per request line; responses may arrive in any order and
are matched by id. Empty-text embeddings are flagged with "empty": true.
HTTP transports POST the same payloads to /embed and /score.
"""

from __future__ import annotations

import json
import logging
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .encoder import PairScorer, ProviderConfig, TextEncoder

log = logging.getLogger(__name__)


class Provider:
    def __init__(self, config: ProviderConfig, serve_embed: bool = True,
                 serve_score: bool = True):
        self.encoder = TextEncoder(config) if serve_embed else None
        self.scorer = PairScorer(config) if serve_score else None

    def handle_lines(self, lines: list[str]) -> list[str]:
        embed_requests: list[tuple[str, str]] = []  # (id, text)
        score_requests: list[tuple[str, str, str]] = []
        for lineno, line in enumerate(lines, 1):
            line = line.strip()
            if not line:
                continue
            try:
                req = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"malformed request line {lineno}: {exc}") from exc
            if "text" in req:
                embed_requests.append((str(req["id"]), str(req["text"])))
            elif "query" in req and "doc" in req:
                score_requests.append((str(req["id"]), str(req["query"]), str(req["doc"])))
            else:
                raise ValueError(f"request line {lineno} is neither embed nor score")
        out: list[str] = []
        if embed_requests:
            if self.encoder is None:
                raise ValueError("embedding endpoint not enabled")
            results = self.encoder.encode([t for _, t in embed_requests])
            for (rid, _), (vec, empty) in zip(embed_requests, results):
                resp = {"id": rid, "vector": [float(x) for x in vec]}
                if empty:
                    resp["empty"] = True
                out.append(json.dumps(resp))
        if score_requests:
            if self.scorer is None:
                raise ValueError("scoring endpoint not enabled")
            scores = self.scorer.score([(q, d) for _, q, d in score_requests])
            for (rid, _, _), score in zip(score_requests, scores):
                out.append(json.dumps({"id": rid, "score": score}))
        return out


def serve_stdio(provider: Provider) -> None:
    """Answer each stdin line as it arrives; runs until EOF."""
    for line in sys.stdin:
        if not line.strip():
            continue
        for response in provider.handle_lines([line]):
            sys.stdout.write(response + "\n")
        sys.stdout.flush()


def make_http_server(provider: Provider, host: str, port: int) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path not in ("/embed", "/score"):
                self.send_error(404, "unknown endpoint")
                return
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length).decode("utf-8")
            try:
                responses = provider.handle_lines(body.splitlines())
            except ValueError as exc:
                self.send_error(400, str(exc))
                return
            payload = ("\n".join(responses) + "\n").encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/x-ndjson")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, fmt, *args):
            log.debug("http: " + fmt, *args)

    return ThreadingHTTPServer((host, port), Handler)
