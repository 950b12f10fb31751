"""End-to-end orchestration: each stage has an in-memory core and a
file-backed wrapper, and both produce identical results so the CLI
composition over artifacts matches a single in-process run byte for byte."""

from __future__ import annotations

import json
import time
from collections import Counter
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .corpus import OutcomeIndex, build_index, read_corpus_jsonl
from .errors import ValidationError
from .metrics import (
    MetricReport, confidence_increase_filter, diversity_report, evaluate_predictions,
    write_report,
)
from .notes import CaseNote, NegationLexicon, Query, build_query, read_notes
from .predictor import (
    AggregationStrategy, ClassifierHead, L2RExample, L2RState, OutcomeModel,
    PredictionRecord, TrainConfig, TrainExample, assign_yj, class_weights,
    l2r_select, load_model, predict, save_model, train_head, train_l2r,
)
from .providers import (
    HashingEmbedder, HttpClient, ProtocolEmbedder, ProtocolPairScorer, StdioClient,
)
from .rerank import BuiltinLexicalScorer, EvidenceSet, PairScore, pool_candidates, rerank, select_top_k
from .retrieval import RankedList, SparseRetriever, Stage, dense_retrieve
from .storage import (
    derive_seed, fnv1a64, load_embeddings, load_index, read_jsonl_artifact,
    save_embeddings, save_embeddings_jsonl, save_index, write_jsonl_artifact,
)
from .text import MeshDictionary


def make_embedder(config: PipelineConfig):
    p = config.embedder
    if p.kind == "builtin":
        return HashingEmbedder(dim=p.dim)
    transport = StdioClient(p.command) if p.kind == "stdio" else HttpClient(p.url)
    return ProtocolEmbedder(transport, batch_size=p.batch_size)


def make_scorer(config: PipelineConfig, index: OutcomeIndex):
    p = config.scorer
    if p.kind == "builtin":
        return BuiltinLexicalScorer(index)
    transport = StdioClient(p.command) if p.kind == "stdio" else HttpClient(p.url)
    return ProtocolPairScorer(transport, batch_size=p.batch_size)


# ---------------------------------------------------------------------------
# in-memory stage cores
# ---------------------------------------------------------------------------

def load_inputs(config: PipelineConfig) -> tuple[list[CaseNote], MeshDictionary, NegationLexicon]:
    dictionary = MeshDictionary.from_tsv(config.dictionary_path)
    lexicon = (NegationLexicon.from_file(config.lexicon_path)
               if config.lexicon_path else NegationLexicon.default())
    notes = list(read_notes(config.notes_path))
    return notes, dictionary, lexicon


def core_index(config: PipelineConfig, dictionary: MeshDictionary) -> OutcomeIndex:
    corpus = read_corpus_jsonl(config.corpus_path, dictionary)
    return build_index(corpus, config.outcome)


def core_queries(notes: list[CaseNote], dictionary: MeshDictionary,
                 lexicon: NegationLexicon) -> list[Query]:
    return [build_query(note, dictionary, lexicon) for note in notes]


def core_embeddings(index: OutcomeIndex, notes: list[CaseNote], embedder,
                    ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    doc_ids = index.doc_ids()
    doc_vecs = embedder.embed_batch([index.documents[d].text for d in doc_ids])
    note_vecs = embedder.embed_batch([n.text for n in notes])
    return (dict(zip(doc_ids, doc_vecs)),
            {n.note_id: v for n, v in zip(notes, note_vecs)})


def core_retrieve(index: OutcomeIndex, queries: list[Query],
                  note_embeddings: dict[str, np.ndarray],
                  doc_embeddings: dict[str, np.ndarray],
                  pool_n: int) -> dict[str, tuple[RankedList, RankedList]]:
    retriever = SparseRetriever(index)
    out = {}
    for query in queries:
        sparse = retriever.retrieve(query, pool_n)
        dense = dense_retrieve(note_embeddings[query.note_id], doc_embeddings, pool_n)
        out[query.note_id] = (sparse, dense)
    return out


def core_rerank(index: OutcomeIndex, queries: list[Query],
                rankings: dict[str, tuple[RankedList, RankedList]],
                scorer, pool_n: int, k: int,
                ) -> tuple[dict[str, EvidenceSet], dict[str, list[PairScore]]]:
    evidence, rescored = {}, {}
    for query in queries:
        sparse, dense = rankings[query.note_id]
        pool = pool_candidates(sparse, dense, pool_n)
        scores = rerank(query, pool, index, scorer) if pool else []
        rescored[query.note_id] = scores
        evidence[query.note_id] = select_top_k(scores, k, note_id=query.note_id)
    return evidence, rescored


def core_training_set(notes: list[CaseNote], evidence: dict[str, EvidenceSet],
                      note_embeddings: dict[str, np.ndarray],
                      doc_embeddings: dict[str, np.ndarray]) -> list[TrainExample]:
    examples = []
    for note in notes:
        if note.label is None:
            continue
        ev = evidence.get(note.note_id)
        items = ev.items if ev else []
        examples.append(TrainExample(
            note_emb=note_embeddings[note.note_id],
            evidence=[(doc_embeddings[doc_id], w) for doc_id, w in items],
            label=note.label,
        ))
    if not examples:
        raise ValidationError("no labeled notes to train on")
    return examples


def split_notes(notes: list[CaseNote], train_fraction: float) -> tuple[list[CaseNote], list[CaseNote]]:
    """Deterministic split preserving note order; labeled notes only."""
    labeled = [n for n in notes if n.label is not None]
    cut = int(round(train_fraction * len(labeled)))
    cut = min(max(cut, 1), len(labeled) - 1) if len(labeled) > 1 else len(labeled)
    return labeled[:cut], labeled[cut:]


def core_train(config: PipelineConfig, notes: list[CaseNote],
               evidence: dict[str, EvidenceSet],
               note_embeddings: dict[str, np.ndarray],
               doc_embeddings: dict[str, np.ndarray],
               strategy: AggregationStrategy | None = None) -> OutcomeModel:
    strategy = strategy or config.strategy
    train_notes, _ = split_notes(notes, config.train_fraction)
    examples = core_training_set(train_notes, evidence, note_embeddings, doc_embeddings)
    counts = np.bincount([ex.label for ex in examples], minlength=config.outcome.class_count)
    if np.any(counts == 0):
        raise ValidationError("a class has no training examples; adjust the split")
    weight_vec = class_weights(counts)
    embed_dim = len(next(iter(note_embeddings.values())))
    tc = TrainConfig(learning_rate=config.learning_rate, epochs=config.epochs,
                     grad_accumulation=config.grad_accumulation,
                     seed=derive_seed(config.seed, f"train:{strategy.value}"))
    head = train_head(examples, strategy, config.outcome.class_count, embed_dim, tc,
                      weight_vec=weight_vec)
    return OutcomeModel(strategy=strategy, head=head, class_weight_vec=weight_vec,
                        embed_dim=embed_dim,
                        train_config={"learning_rate": config.learning_rate,
                                      "epochs": config.epochs,
                                      "grad_accumulation": config.grad_accumulation,
                                      "k": config.k},
                        seed=config.seed)


def core_predict(model: OutcomeModel, notes: list[CaseNote],
                 evidence: dict[str, EvidenceSet],
                 note_embeddings: dict[str, np.ndarray],
                 doc_embeddings: dict[str, np.ndarray]) -> list[PredictionRecord]:
    records = []
    for note in notes:
        ev = evidence.get(note.note_id)
        items = ev.items if ev else []
        ev_vecs = [(doc_embeddings[doc_id], w) for doc_id, w in items]
        probs = predict(model.strategy, model.head, note_embeddings[note.note_id],
                        ev_vecs, model.embed_dim)
        records.append(PredictionRecord.from_probs(
            note.note_id, probs, evidence=list(items), strategy=model.strategy))
    return records


def run_end_to_end(config: PipelineConfig) -> tuple[list[PredictionRecord], MetricReport]:
    """Single-process composition of every stage core (no intermediate files)."""
    notes, dictionary, lexicon = load_inputs(config)
    index = core_index(config, dictionary)
    queries = core_queries(notes, dictionary, lexicon)
    embedder = make_embedder(config)
    doc_embs, note_embs = core_embeddings(index, notes, embedder)
    rankings = core_retrieve(index, queries, note_embs, doc_embs, config.pool_n)
    scorer = make_scorer(config, index)
    evidence, _ = core_rerank(index, queries, rankings, scorer, config.pool_n, config.k)
    model = core_train(config, notes, evidence, note_embs, doc_embs)
    _, test_notes = split_notes(notes, config.train_fraction)
    records = core_predict(model, test_notes, evidence, note_embs, doc_embs)
    labels = {n.note_id: n.label for n in test_notes}
    report = evaluate_predictions(records, labels, config.outcome.class_count,
                                  config.topk_fraction)
    return records, report


# ---------------------------------------------------------------------------
# run manifest
# ---------------------------------------------------------------------------

class RunManifest:
    """Per-run record: config snapshot, input checksums, stage timings,
    output artifact checksums."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.path = config.artifact("manifest")
        self.data = self._load()

    def _load(self) -> dict:
        if self.path.exists():
            try:
                return json.loads(self.path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                pass
        snapshot = json.dumps(self.config.raw, sort_keys=True)
        return {
            "run_id": f"{fnv1a64(snapshot.encode('utf-8')):016x}",
            "config": self.config.raw,
            "seed": self.config.seed,
            "input_checksums": self._input_checksums(),
            "stages": {},
        }

    def _input_checksums(self) -> dict[str, str]:
        out = {}
        for name, path in (("corpus", self.config.corpus_path),
                           ("notes", self.config.notes_path),
                           ("dictionary", self.config.dictionary_path),
                           ("lexicon", self.config.lexicon_path)):
            if path and Path(path).exists():
                out[name] = f"{fnv1a64(Path(path).read_bytes()):016x}"
        return out

    def record(self, stage: str, duration: float, outputs: list[Path]) -> None:
        self.data["stages"][stage] = {
            "duration_s": round(duration, 6),
            "outputs": {
                str(p): f"{fnv1a64(Path(p).read_bytes()):016x}"
                for p in outputs if Path(p).exists()
            },
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")


# ---------------------------------------------------------------------------
# file-backed stages (the CLI surface)
# ---------------------------------------------------------------------------

def _timed(manifest: RunManifest, stage: str, outputs: list[Path]):
    class _Timer:
        def __enter__(self):
            self.t0 = time.monotonic()
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc_type is None:
                manifest.record(stage, time.monotonic() - self.t0, outputs)
    return _Timer()


def _query_records(queries: list[Query]) -> list[dict]:
    return [{
        "note_id": q.note_id,
        "terms": dict(sorted(q.mesh_terms.items())),
        "raw_text": q.raw_text,
        "empty": q.empty,
    } for q in queries]


def _load_queries(config: PipelineConfig) -> list[Query]:
    records = read_jsonl_artifact(config.artifact("queries"), "queries")
    return [Query(note_id=r["note_id"], mesh_terms=Counter(r["terms"]),
                  raw_text=r["raw_text"], empty=r["empty"]) for r in records]


def _ranking_records(rankings: dict[str, RankedList]) -> list[dict]:
    return [{
        "note_id": note_id,
        "stage": ranking.stage.value,
        "entries": [[doc_id, score] for doc_id, score in ranking.entries],
    } for note_id, ranking in sorted(rankings.items())]


def _load_rankings(path: Path, kind: str) -> dict[str, RankedList]:
    out = {}
    for rec in read_jsonl_artifact(path, kind):
        out[rec["note_id"]] = RankedList(
            entries=[(e[0], float(e[1])) for e in rec["entries"]],
            stage=Stage(rec["stage"]))
    return out


def stage_index(config: PipelineConfig) -> Path:
    manifest = RunManifest(config)
    out = config.artifact("index")
    with _timed(manifest, "index", [out]):
        dictionary = MeshDictionary.from_tsv(config.dictionary_path)
        index = core_index(config, dictionary)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_index(index, out)
    return out


def stage_query(config: PipelineConfig) -> Path:
    manifest = RunManifest(config)
    out = config.artifact("queries")
    with _timed(manifest, "query", [out]):
        notes, dictionary, lexicon = load_inputs(config)
        queries = core_queries(notes, dictionary, lexicon)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_jsonl_artifact(out, "queries", _query_records(queries))
    return out


def stage_retrieve(config: PipelineConfig) -> list[Path]:
    manifest = RunManifest(config)
    outs = [config.artifact(n) for n in
            ("doc_embeddings", "note_embeddings", "rankings_sparse", "rankings_dense")]
    with _timed(manifest, "retrieve", outs):
        index = load_index(config.artifact("index"))
        queries = _load_queries(config)
        notes = list(read_notes(config.notes_path))
        embedder = make_embedder(config)
        doc_embs, note_embs = core_embeddings(index, notes, embedder)
        save_embeddings(doc_embs, config.artifact("doc_embeddings"))
        save_embeddings_jsonl(doc_embs, str(config.artifact("doc_embeddings")) + ".jsonl")
        save_embeddings(note_embs, config.artifact("note_embeddings"))
        rankings = core_retrieve(index, queries, note_embs, doc_embs, config.pool_n)
        write_jsonl_artifact(config.artifact("rankings_sparse"), "rankings",
                             _ranking_records({nid: r[0] for nid, r in rankings.items()}))
        write_jsonl_artifact(config.artifact("rankings_dense"), "rankings",
                             _ranking_records({nid: r[1] for nid, r in rankings.items()}))
    return outs


def stage_rerank(config: PipelineConfig) -> list[Path]:
    manifest = RunManifest(config)
    outs = [config.artifact("evidence"), config.artifact("rankings_reranked")]
    with _timed(manifest, "rerank", outs):
        index = load_index(config.artifact("index"))
        queries = _load_queries(config)
        sparse = _load_rankings(config.artifact("rankings_sparse"), "rankings")
        dense = _load_rankings(config.artifact("rankings_dense"), "rankings")
        rankings = {q.note_id: (sparse[q.note_id], dense[q.note_id]) for q in queries}
        scorer = make_scorer(config, index)
        evidence, rescored = core_rerank(index, queries, rankings, scorer,
                                         config.pool_n, config.k)
        write_jsonl_artifact(
            config.artifact("evidence"), "evidence",
            [{"note_id": nid, "k": ev.k,
              "items": [[doc_id, w] for doc_id, w in ev.items]}
             for nid, ev in sorted(evidence.items())])
        write_jsonl_artifact(
            config.artifact("rankings_reranked"), "rankings",
            _ranking_records({
                nid: RankedList(entries=[(s.doc_id, s.relevance) for s in scores],
                                stage=Stage.RERANKED)
                for nid, scores in rescored.items()}))
    return outs


def _load_evidence(config: PipelineConfig) -> dict[str, EvidenceSet]:
    out = {}
    for rec in read_jsonl_artifact(config.artifact("evidence"), "evidence"):
        out[rec["note_id"]] = EvidenceSet(
            note_id=rec["note_id"],
            items=[(e[0], float(e[1])) for e in rec["items"]],
            k=int(rec["k"]))
    return out


def _load_stage_embeddings(config: PipelineConfig) -> tuple[dict, dict]:
    return (load_embeddings(config.artifact("doc_embeddings")),
            load_embeddings(config.artifact("note_embeddings")))


def stage_train(config: PipelineConfig) -> list[Path]:
    """Train one model, or one per grid point when grid mode is on."""
    manifest = RunManifest(config)
    notes = list(read_notes(config.notes_path))
    evidence = _load_evidence(config)
    doc_embs, note_embs = _load_stage_embeddings(config)
    out = config.artifact("model")
    outputs = []
    t0 = time.monotonic()
    if config.grid_mode:
        from .config import GA_GRID, K_GRID, LR_GRID
        for lr in LR_GRID:
            for k in K_GRID:
                for ga in GA_GRID:
                    point = PipelineConfig.from_dict(config.raw)
                    point.learning_rate, point.k, point.grad_accumulation = lr, k, ga
                    trimmed = {nid: EvidenceSet(nid, ev.items[:k], k)
                               for nid, ev in evidence.items()}
                    model = core_train(point, notes, trimmed, note_embs, doc_embs)
                    path = Path(str(out).replace(
                        ".bin", f".lr{lr:g}_k{k}_ga{ga}.bin"))
                    save_model(model, path)
                    outputs.append(path)
    else:
        model = core_train(config, notes, evidence, note_embs, doc_embs)
        save_model(model, out)
        outputs.append(out)
    manifest.record("train", time.monotonic() - t0, outputs)
    return outputs


def stage_predict(config: PipelineConfig) -> Path:
    manifest = RunManifest(config)
    out = config.artifact("predictions")
    with _timed(manifest, "predict", [out]):
        model = load_model(config.artifact("model"))
        notes = list(read_notes(config.notes_path))
        evidence = _load_evidence(config)
        doc_embs, note_embs = _load_stage_embeddings(config)
        _, test_notes = split_notes(notes, config.train_fraction)
        records = core_predict(model, test_notes, evidence, note_embs, doc_embs)
        write_jsonl_artifact(out, "predictions", [r.to_dict() for r in records])
    return out


def stage_eval(config: PipelineConfig, predictions_path: Path | None = None,
               baseline_path: Path | None = None) -> MetricReport:
    manifest = RunManifest(config)
    outs = [config.artifact("report"), config.artifact("report_text"),
            config.artifact("diversity")]
    with _timed(manifest, "eval", outs):
        path = predictions_path or config.artifact("predictions")
        records = [PredictionRecord.from_dict(r)
                   for r in read_jsonl_artifact(path, "predictions")]
        notes = list(read_notes(config.notes_path))
        labels = {n.note_id: n.label for n in notes if n.label is not None}
        report = evaluate_predictions(records, labels, config.outcome.class_count,
                                      config.topk_fraction)
        write_report(report, config.artifact("report"), config.artifact("report_text"),
                     title=f"outcome {config.outcome.outcome_id}")
        evidence = _load_evidence(config)
        test_ids = {r.note_id for r in records}
        div = diversity_report([ev for nid, ev in sorted(evidence.items())
                                if nid in test_ids])
        config.artifact("diversity").write_text(div.to_csv(), encoding="utf-8")
        if baseline_path is not None:
            baseline = [PredictionRecord.from_dict(r)
                        for r in read_jsonl_artifact(baseline_path, "predictions")]
            ci = confidence_increase_filter(records, baseline, labels, config.ci_threshold)
            ci_path = config.artifact("report").with_name("confidence_increase.json")
            ci_path.write_text(json.dumps({str(c): v for c, v in ci.items()},
                                          indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
    return report


def stage_l2r(config: PipelineConfig) -> list[Path]:
    """Joint retriever+predictor training over reranked candidate lists.

    Helpfulness labels come from comparing each candidate's paired
    prediction against a note-only baseline, both trained here; the joint
    model then refines candidate selection against the early-update loss.
    """
    manifest = RunManifest(config)
    outs = [config.artifact("l2r_model"), config.artifact("l2r_predictions")]
    t0 = time.monotonic()
    notes = list(read_notes(config.notes_path))
    evidence = _load_evidence(config)
    reranked = _load_rankings(config.artifact("rankings_reranked"), "rankings")
    doc_embs, note_embs = _load_stage_embeddings(config)
    embed_dim = len(next(iter(note_embs.values())))
    train_notes, test_notes = split_notes(notes, config.train_fraction)

    # baseline and pair models used only to assign helpfulness labels
    baseline_model = core_train(config, notes, evidence, note_embs, doc_embs,
                                strategy=AggregationStrategy.NOTE_ONLY)
    pair_strategy = (config.strategy if config.strategy in
                     (AggregationStrategy.SOFT_VOTING, AggregationStrategy.WEIGHTED_VOTING)
                     else AggregationStrategy.SOFT_VOTING)
    pair_model = core_train(config, notes, evidence, note_embs, doc_embs,
                            strategy=pair_strategy)

    def build_examples(subset: list[CaseNote]) -> list[L2RExample]:
        examples = []
        for note in subset:
            ranking = reranked.get(note.note_id)
            if ranking is None or not ranking.entries or note.label is None:
                continue
            cand_ids = ranking.top(config.candidate_count)
            cand = np.stack([doc_embs[d] for d in cand_ids]).astype(np.float64)
            base_probs = baseline_model.head.probs(
                np.asarray(note_embs[note.note_id], dtype=np.float64))
            note_vec = np.asarray(note_embs[note.note_id], dtype=np.float64)
            y = np.zeros(len(cand_ids))
            for i, doc_id in enumerate(cand_ids):
                paired = pair_model.head.probs(
                    np.concatenate([note_vec, np.asarray(doc_embs[doc_id],
                                                         dtype=np.float64)]))
                y[i] = assign_yj(base_probs, paired, note.label)
            examples.append(L2RExample(
                note_emb=note_embs[note.note_id], cand_ids=cand_ids,
                cand_embs=cand, y=y, label=note.label))
        return examples

    train_examples = build_examples(train_notes)
    if not train_examples:
        raise ValidationError("no usable notes for joint training")
    counts = np.bincount([ex.label for ex in train_examples],
                         minlength=config.outcome.class_count)
    weight_vec = class_weights(np.maximum(counts, 1))
    state = L2RState.identity(embed_dim, lambda_early=config.lambda_early,
                              candidate_count=config.candidate_count)
    # warm-start the joint head from the pair model so joint training
    # refines rather than relearns the outcome mapping
    head = ClassifierHead(pair_model.head.weights.copy(), pair_model.head.bias.copy())
    tc = TrainConfig(learning_rate=config.learning_rate, epochs=config.epochs,
                     grad_accumulation=config.grad_accumulation,
                     seed=derive_seed(config.seed, "l2r"))
    state, head, history = train_l2r(train_examples, state, head, weight_vec,
                                     k=config.k, config=tc)
    model = OutcomeModel(strategy=AggregationStrategy.SOFT_VOTING, head=head,
                         class_weight_vec=weight_vec, embed_dim=embed_dim,
                         train_config={"lambda_early": config.lambda_early,
                                       "early_loss_history": history},
                         seed=config.seed, l2r=state)
    save_model(model, config.artifact("l2r_model"))

    records = []
    for note in test_notes:
        ranking = reranked.get(note.note_id)
        if ranking is None or not ranking.entries:
            continue
        cand_ids = ranking.top(config.candidate_count)
        cand = np.stack([doc_embs[d] for d in cand_ids]).astype(np.float64)
        selected = l2r_select(state, note_embs[note.note_id], cand_ids, cand, config.k)
        ev_vecs = [(doc_embs[doc_id], 1.0) for doc_id, _ in selected]
        probs = predict(AggregationStrategy.SOFT_VOTING, head,
                        note_embs[note.note_id], ev_vecs, embed_dim)
        records.append(PredictionRecord.from_probs(
            note.note_id, probs, evidence=selected,
            strategy=AggregationStrategy.SOFT_VOTING))
    write_jsonl_artifact(config.artifact("l2r_predictions"), "predictions",
                         [r.to_dict() for r in records])
    manifest.record("l2r", time.monotonic() - t0, outs)
    return outs


def run_all_stages(config: PipelineConfig) -> MetricReport:
    """File-composed pipeline: every stage reads its inputs from artifacts."""
    stage_index(config)
    stage_query(config)
    stage_retrieve(config)
    stage_rerank(config)
    stage_train(config)
    stage_predict(config)
    return stage_eval(config)
