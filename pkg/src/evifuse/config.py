"""Pipeline configuration: loading, validation, overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import OutcomeSpec
from .errors import ValidationError
from .predictor import AggregationStrategy

LR_GRID = [5e-4, 1e-5, 5e-5, 1e-6, 5e-6]
K_GRID = [1, 5, 10]
GA_GRID = [10, 20]

# default artifact names inside the workdir
ARTIFACT_NAMES = {
    "index": "index.bin",
    "doc_embeddings": "doc_embeddings.bin",
    "note_embeddings": "note_embeddings.bin",
    "queries": "queries.jsonl",
    "rankings_sparse": "rankings_sparse.jsonl",
    "rankings_dense": "rankings_dense.jsonl",
    "rankings_reranked": "rankings_reranked.jsonl",
    "evidence": "evidence.jsonl",
    "model": "model.bin",
    "l2r_model": "l2r_model.bin",
    "predictions": "predictions.jsonl",
    "l2r_predictions": "l2r_predictions.jsonl",
    "report": "report.json",
    "report_text": "report.txt",
    "diversity": "diversity.csv",
    "manifest": "manifest.json",
}


@dataclass
class ProviderConfig:
    kind: str = "builtin"          # builtin | stdio | http
    dim: int = 256                 # builtin embedder dimension
    command: list[str] = field(default_factory=list)
    url: str = ""
    batch_size: int = 64

    def __post_init__(self):
        if self.kind not in ("builtin", "stdio", "http"):
            raise ValidationError(f"provider kind must be builtin|stdio|http, got {self.kind!r}")
        if self.kind == "stdio" and not self.command:
            raise ValidationError("stdio provider needs a command")
        if self.kind == "http" and not self.url:
            raise ValidationError("http provider needs a url")

    @classmethod
    def from_dict(cls, d: dict) -> "ProviderConfig":
        return cls(kind=d.get("kind", "builtin"), dim=int(d.get("dim", 256)),
                   command=list(d.get("command", [])), url=d.get("url", ""),
                   batch_size=int(d.get("batch_size", 64)))


@dataclass
class PipelineConfig:
    outcome: OutcomeSpec
    workdir: str
    corpus_path: str = ""
    notes_path: str = ""
    dictionary_path: str = ""
    lexicon_path: str = ""
    embedder: ProviderConfig = field(default_factory=ProviderConfig)
    scorer: ProviderConfig = field(default_factory=ProviderConfig)
    pool_n: int = 100
    k: int = 5
    strategy: AggregationStrategy = AggregationStrategy.SOFT_VOTING
    learning_rate: float = 5e-4
    epochs: int = 60
    grad_accumulation: int = 10
    seed: int = 0
    lambda_early: float = 1.0
    candidate_count: int = 100
    grid_mode: bool = False
    train_fraction: float = 0.7
    topk_fraction: float = 0.10
    ci_threshold: float = 0.10
    raw: dict = field(default_factory=dict, repr=False)

    def validate(self, require_inputs: bool = True) -> None:
        if self.k < 1 or self.pool_n < 1:
            raise ValidationError("k and pool_n must be positive")
        if self.k > self.pool_n:
            raise ValidationError(f"k ({self.k}) must not exceed pool_n ({self.pool_n})")
        if self.candidate_count < self.k:
            raise ValidationError("candidate_count must be >= k")
        if not 0 < self.train_fraction < 1:
            raise ValidationError("train_fraction must lie strictly between 0 and 1")
        if self.grid_mode:
            if self.k not in K_GRID:
                raise ValidationError(f"grid mode: k must be one of {K_GRID}, got {self.k}")
            if not any(abs(self.learning_rate - lr) < 1e-12 for lr in LR_GRID):
                raise ValidationError(
                    f"grid mode: learning_rate must be one of {LR_GRID}, "
                    f"got {self.learning_rate}")
            if self.grad_accumulation not in GA_GRID:
                raise ValidationError(
                    f"grid mode: grad_accumulation must be one of {GA_GRID}, "
                    f"got {self.grad_accumulation}")
        if require_inputs:
            for name, path in (("corpus", self.corpus_path), ("notes", self.notes_path),
                               ("dictionary", self.dictionary_path),
                               ("lexicon", self.lexicon_path)):
                if path and not Path(path).exists():
                    raise ValidationError(f"{name} path does not exist: {path}")

    def artifact(self, name: str) -> Path:
        if name not in ARTIFACT_NAMES:
            raise ValidationError(f"unknown artifact {name!r}")
        override = self.raw.get("paths", {}).get(name)
        if override:
            return Path(override)
        return Path(self.workdir) / ARTIFACT_NAMES[name]

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        try:
            outcome = OutcomeSpec.from_dict(raw["outcome"])
        except KeyError as exc:
            raise ValidationError(f"config missing section {exc}") from exc
        paths = raw.get("paths", {})
        providers = raw.get("providers", {})
        retrieval = raw.get("retrieval", {})
        training = raw.get("training", {})
        eval_cfg = raw.get("eval", {})
        strategy_name = training.get("strategy", "soft_voting")
        try:
            strategy = AggregationStrategy(strategy_name)
        except ValueError as exc:
            raise ValidationError(f"unknown strategy {strategy_name!r}") from exc
        return cls(
            outcome=outcome,
            workdir=paths.get("workdir", "."),
            corpus_path=paths.get("corpus", ""),
            notes_path=paths.get("notes", ""),
            dictionary_path=paths.get("dictionary", ""),
            lexicon_path=paths.get("lexicon", ""),
            embedder=ProviderConfig.from_dict(providers.get("embedder", {})),
            scorer=ProviderConfig.from_dict(providers.get("scorer", {})),
            pool_n=int(retrieval.get("pool_n", 100)),
            k=int(retrieval.get("k", 5)),
            strategy=strategy,
            learning_rate=float(training.get("learning_rate", 5e-4)),
            epochs=int(training.get("epochs", 60)),
            grad_accumulation=int(training.get("grad_accumulation", 10)),
            seed=int(training.get("seed", 0)),
            lambda_early=float(training.get("lambda_early", 1.0)),
            candidate_count=int(training.get("candidate_count", 100)),
            grid_mode=bool(training.get("grid_mode", False)),
            train_fraction=float(training.get("train_fraction", 0.7)),
            topk_fraction=float(eval_cfg.get("topk_fraction", 0.10)),
            ci_threshold=float(eval_cfg.get("ci_threshold", 0.10)),
            raw=raw,
        )

    @classmethod
    def load(cls, path: str | Path, overrides: list[str] | None = None) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot load config {path}: {exc}") from exc
        for item in overrides or []:
            apply_override(raw, item)
        return cls.from_dict(raw)


def apply_override(raw: dict, item: str) -> None:
    """Apply a `dotted.path=value` override; values parse as JSON, else strings."""
    if "=" not in item:
        raise ValidationError(f"override must look like key=value, got {item!r}")
    dotted, value = item.split("=", 1)
    keys = dotted.split(".")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ValidationError(f"override path {dotted!r} crosses a non-object")
    node[keys[-1]] = parsed
