"""Model wrappers: text embeddings and pair relevance scores.

Inference runs in eval mode under no_grad, and every result is cached by
input text (or text pair) for the lifetime of the provider, so repeated
requests in a session return bit-identical answers regardless of how
batches were composed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

log = logging.getLogger(__name__)


@dataclass
class ProviderConfig:
    model: str
    device: str = "cpu"
    batch_size: int = 16
    max_length: int = 256
    pooling: str = "cls"  # cls | mean

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.max_length < 16:
            raise ValueError("max sequence length must be >= 16")
        if self.pooling not in ("cls", "mean"):
            raise ValueError(f"pooling must be cls or mean, got {self.pooling!r}")


class TextEncoder:
    """Sentence embeddings from a pretrained encoder (CLS or mean pooling)."""

    def __init__(self, config: ProviderConfig):
        from transformers import AutoModel, AutoTokenizer

        self.config = config
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(config.model)
            self.model = AutoModel.from_pretrained(config.model)
        except Exception as exc:
            raise RuntimeError(f"cannot load encoder model {config.model!r}: {exc}") from exc
        self.model.to(config.device)
        self.model.eval()
        self.truncated_count = 0
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return int(self.model.config.hidden_size)

    def encode(self, texts: list[str]) -> list[tuple[np.ndarray, bool]]:
        """One (vector, was_empty) per text; oversize batches split internally."""
        missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        for start in range(0, len(missing), self.config.batch_size):
            chunk = missing[start:start + self.config.batch_size]
            self._encode_chunk(chunk)
        return [(self._cache[t], not t.strip()) for t in texts]

    def _encode_chunk(self, chunk: list[str]) -> None:
        for text in chunk:
            ids = self.tokenizer(text, truncation=False)["input_ids"]
            if len(ids) > self.config.max_length:
                self.truncated_count += 1
                log.warning("input truncated to %d tokens (%d so far)",
                            self.config.max_length, self.truncated_count)
        batch = self.tokenizer(chunk, padding=True, truncation=True,
                               max_length=self.config.max_length, return_tensors="pt")
        batch = {k: v.to(self.config.device) for k, v in batch.items()}
        with torch.no_grad():
            hidden = self.model(**batch).last_hidden_state  # (n, seq, dim)
        if self.config.pooling == "cls":
            pooled = hidden[:, 0, :]
        else:
            mask = batch["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        vectors = pooled.cpu().numpy().astype(np.float32)
        for text, vec in zip(chunk, vectors):
            self._cache[text] = vec


class PairScorer:
    """Positive-class probability from a sequence-classification model over
    the concatenated (query, document) pair."""

    def __init__(self, config: ProviderConfig):
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self.config = config
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(config.model)
            self.model = AutoModelForSequenceClassification.from_pretrained(config.model)
        except Exception as exc:
            raise RuntimeError(f"cannot load pair model {config.model!r}: {exc}") from exc
        self.model.to(config.device)
        self.model.eval()
        self.truncated_count = 0
        self._cache: dict[tuple[str, str], float] = {}

    def score(self, pairs: list[tuple[str, str]]) -> list[float]:
        missing = [p for p in dict.fromkeys(pairs) if p not in self._cache]
        for start in range(0, len(missing), self.config.batch_size):
            self._score_chunk(missing[start:start + self.config.batch_size])
        return [self._cache[p] for p in pairs]

    def _score_chunk(self, chunk: list[tuple[str, str]]) -> None:
        queries = [q for q, _ in chunk]
        docs = [d for _, d in chunk]
        batch = self.tokenizer(queries, docs, padding=True, truncation=True,
                               max_length=self.config.max_length, return_tensors="pt")
        batch = {k: v.to(self.config.device) for k, v in batch.items()}
        with torch.no_grad():
            logits = self.model(**batch).logits
        if logits.shape[-1] == 1:
            probs = torch.sigmoid(logits[:, 0])
        else:
            probs = torch.softmax(logits, dim=-1)[:, -1]
        for pair, p in zip(chunk, probs.cpu().numpy()):
            self._cache[pair] = float(p)
