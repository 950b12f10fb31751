"""Synthetic corpora and notes with planted outcome-evidence structure.

Each note carries a unique link token; that token is planted into the
note's designated relevant documents with probability
`evidence_strength` and into every other document with probability
`noise_rate`, and class marker tokens follow the same two rates (own
class vs elsewhere). At evidence_strength = noise_rate relevant and
irrelevant documents are therefore statistically identical and retrieval
degenerates to chance, while at (1.0, 0.0) the designated documents are
exactly recoverable. Because link tokens never repeat across notes, a
note-only model cannot exploit them, but the retrieval path can
aggregate markers over several documents: the situation where added
literature should help.

The token vocabulary doubles as the term dictionary (every token is its
own descriptor), so fixtures exercise the full query-construction path
without a real vocabulary file.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Document, OutcomeSpec
from .errors import ValidationError
from .notes import CaseNote, NegationLexicon, note_to_dict

COHORT_TOKEN = "cohortstudy"


@dataclass
class FixtureSpec:
    seed: int = 0
    n_docs: int = 200
    n_notes: int = 60
    class_count: int = 2
    vocab_size: int = 30
    evidence_strength: float = 0.9
    noise_rate: float = 0.1
    relevant_per_note: int = 5
    bg_tokens_per_doc: int = 3
    bg_tokens_per_note: int = 3
    marker_repeats: int = 2  # tf of a planted marker in documents

    def __post_init__(self):
        if self.n_docs < self.class_count:
            raise ValidationError(
                f"infeasible fixture: {self.n_docs} docs for {self.class_count} classes")
        if not (0.0 <= self.evidence_strength <= 1.0 and 0.0 <= self.noise_rate <= 1.0):
            raise ValidationError("evidence_strength and noise_rate must lie in [0, 1]")
        if self.n_notes < 1 or self.class_count < 2 or self.vocab_size < 1:
            raise ValidationError("fixture sizes must be positive (>=2 classes)")


@dataclass
class FixtureData:
    documents: list[Document]
    notes: list[CaseNote]
    judgments: dict[str, dict[str, int]]  # note_id -> doc_id -> 0/1
    labels: dict[str, int]
    dictionary_terms: list[str]
    outcome: OutcomeSpec


def marker_token(c: int) -> str:
    return f"outcome{c:02d}"


def link_token(i: int) -> str:
    return f"case{i:04d}"


def generate(spec: FixtureSpec) -> FixtureData:
    """Build the corpus, notes, designed relevance sets, and labels.

    Fully deterministic for a given seed: the RNG is consumed in a fixed
    order (docs first, then notes).
    """
    rng = np.random.default_rng(spec.seed)
    c_count = spec.class_count
    doc_class = [j % c_count for j in range(spec.n_docs)]
    docs_by_class = {c: [j for j in range(spec.n_docs) if doc_class[j] == c]
                     for c in range(c_count)}

    note_class = [i % c_count for i in range(spec.n_notes)]
    # Designated sets slide along the class's document pool as the note
    # index grows, so nearby notes share evidence while any contiguous
    # train/test split leaves the test notes with mostly unseen documents.
    class_position = {c: 0 for c in range(c_count)}
    notes_per_class = {c: sum(1 for cc in note_class if cc == c) for c in range(c_count)}
    relevant_sets: list[list[int]] = []
    for i in range(spec.n_notes):
        c = note_class[i]
        pool = docs_by_class[c]
        k = min(spec.relevant_per_note, len(pool))
        p = class_position[c]
        class_position[c] += 1
        span = len(pool) - k
        start = round(p * span / max(notes_per_class[c] - 1, 1)) if span > 0 else 0
        relevant_sets.append(sorted(pool[start + t] for t in range(k)))

    relevant_lookup = [set(rel) for rel in relevant_sets]
    doc_vocab = [f"dterm{t:03d}" for t in range(spec.vocab_size)]
    note_vocab = [f"nterm{t:03d}" for t in range(spec.vocab_size)]
    markers = [marker_token(c) for c in range(c_count)]

    documents: list[Document] = []
    for j in range(spec.n_docs):
        tokens = [COHORT_TOKEN]
        for i in range(spec.n_notes):
            p = spec.evidence_strength if j in relevant_lookup[i] else spec.noise_rate
            if rng.random() < p:
                tokens.append(link_token(i))
        for c in range(c_count):
            p = spec.evidence_strength if c == doc_class[j] else spec.noise_rate
            if rng.random() < p:
                tokens.extend([markers[c]] * spec.marker_repeats)
        for _ in range(spec.bg_tokens_per_doc):
            tokens.append(doc_vocab[int(rng.integers(len(doc_vocab)))])
        doc_id = f"doc{j:04d}"
        documents.append(Document(
            doc_id=doc_id,
            title=f"report {j:04d}",
            body=" ".join(tokens),
            mesh_terms=Counter(tokens),
        ))

    notes: list[CaseNote] = []
    labels: dict[str, int] = {}
    judgments: dict[str, dict[str, int]] = {}
    for i in range(spec.n_notes):
        c = note_class[i]
        complaint = [link_token(i)]
        history = []
        for cc in range(c_count):
            p = spec.evidence_strength if cc == c else spec.noise_rate
            if rng.random() < p:
                history.append(markers[cc])
        exam = [note_vocab[int(rng.integers(len(note_vocab)))]
                for _ in range(spec.bg_tokens_per_note)]
        note_id = f"note{i:04d}"
        notes.append(CaseNote(
            note_id=note_id,
            sections={
                "chief_complaint": " ".join(complaint),
                "present_illness": " ".join(history) if history else "stable condition",
                "physical_exam": " ".join(exam),
            },
            label=c,
        ))
        labels[note_id] = c
        docs_rel = {f"doc{j:04d}": 1 for j in relevant_sets[i]}
        non_relevant = [j for j in range(spec.n_docs) if j not in relevant_sets[i]]
        picks = rng.choice(len(non_relevant), size=min(len(non_relevant), len(docs_rel)),
                           replace=False)
        for p_idx in sorted(int(p) for p in picks):
            docs_rel[f"doc{non_relevant[p_idx]:04d}"] = 0
        judgments[note_id] = docs_rel

    dictionary_terms = sorted(
        {COHORT_TOKEN, *markers, *(link_token(i) for i in range(spec.n_notes)),
         *doc_vocab, *note_vocab})
    outcome = OutcomeSpec(
        outcome_id="synthetic",
        class_count=c_count,
        class_descriptions=[f"synthetic class {c}" for c in range(c_count)],
        mesh_queries=[[COHORT_TOKEN]],
    )
    return FixtureData(documents=documents, notes=notes, judgments=judgments,
                       labels=labels, dictionary_terms=dictionary_terms, outcome=outcome)


def write_fixture(spec: FixtureSpec, outdir: str | Path) -> dict[str, str]:
    """Emit generated data in the pipeline's ingestion formats.

    Returns a name -> path mapping for the files written.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    data = generate(spec)
    paths = {
        "corpus": outdir / "corpus.jsonl",
        "notes": outdir / "notes.jsonl",
        "dictionary": outdir / "dictionary.tsv",
        "judgments": outdir / "judgments.tsv",
        "lexicon": outdir / "lexicon.json",
        "outcome": outdir / "outcome.json",
    }
    with open(paths["corpus"], "w", encoding="utf-8") as fh:
        for doc in data.documents:
            fh.write(json.dumps({
                "doc_id": doc.doc_id,
                "title": doc.title,
                "body": doc.body,
                "mesh_terms": dict(sorted(doc.mesh_terms.items())),
            }, sort_keys=True) + "\n")
    with open(paths["notes"], "w", encoding="utf-8") as fh:
        for note in data.notes:
            fh.write(json.dumps(note_to_dict(note), sort_keys=True) + "\n")
    with open(paths["dictionary"], "w", encoding="utf-8") as fh:
        for term in data.dictionary_terms:
            fh.write(f"{term}\t{term}\n")
    with open(paths["judgments"], "w", encoding="utf-8") as fh:
        for note_id in sorted(data.judgments):
            for doc_id in sorted(data.judgments[note_id]):
                fh.write(f"{note_id}\t{doc_id}\t{data.judgments[note_id][doc_id]}\n")
    lexicon = NegationLexicon.default()
    paths["lexicon"].write_text(json.dumps({
        "pre_triggers": lexicon.pre_triggers,
        "post_triggers": lexicon.post_triggers,
        "pseudo_triggers": lexicon.pseudo_triggers,
        "terminators": lexicon.terminators,
        "window": lexicon.window,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["outcome"].write_text(
        json.dumps(data.outcome.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {name: str(path) for name, path in paths.items()}


# ---------------------------------------------------------------------------
# negation fixtures
# ---------------------------------------------------------------------------

NEGATION_TERMS = [
    "chest pain", "fever", "diabetes", "cirrhosis", "mechanical ventilation",
    "renal failure", "shortness of breath", "cough", "hypertension", "pneumonia",
    "nausea", "dizziness", "edema", "sepsis", "anemia",
]

_ASSERT_TEMPLATES = [
    "patient reports {term}.",
    "significant {term} on admission.",
    "{term} persists today.",
    "exam notable for {term}.",
]

_NEGATE_TEMPLATES = [
    "denies {term}.",
    "no {term} at this time.",
    "negative for {term}.",
    "without {term} today.",
    "{term} ruled out.",
    "{term} unlikely.",
]

_MIXED_TEMPLATES = [
    "no {neg} but {pos} present.",
    "denies {neg} however {pos} continues.",
]

_PSEUDO_TEMPLATES = [
    "no increase in {term}.",
    "not only {term} today.",
]


def generate_negation_notes(seed: int, n_notes: int) -> tuple[list[CaseNote], list[str]]:
    """Notes whose sentences plant asserted, negated, mixed, and pseudo-negated
    mentions of dictionary terms. Returns (notes, dictionary terms)."""
    rng = np.random.default_rng(seed)
    notes = []
    for i in range(n_notes):
        sentences = []
        n_sent = int(rng.integers(3, 7))
        for _ in range(n_sent):
            kind = int(rng.integers(4))
            if kind == 0:
                tpl = _ASSERT_TEMPLATES[int(rng.integers(len(_ASSERT_TEMPLATES)))]
                sentences.append(tpl.format(term=_pick(rng)))
            elif kind == 1:
                tpl = _NEGATE_TEMPLATES[int(rng.integers(len(_NEGATE_TEMPLATES)))]
                sentences.append(tpl.format(term=_pick(rng)))
            elif kind == 2:
                tpl = _MIXED_TEMPLATES[int(rng.integers(len(_MIXED_TEMPLATES)))]
                sentences.append(tpl.format(neg=_pick(rng), pos=_pick(rng)))
            else:
                tpl = _PSEUDO_TEMPLATES[int(rng.integers(len(_PSEUDO_TEMPLATES)))]
                sentences.append(tpl.format(term=_pick(rng)))
        half = max(1, len(sentences) // 2)
        notes.append(CaseNote(
            note_id=f"neg{i:04d}",
            sections={
                "chief_complaint": " ".join(sentences[:half]),
                "present_illness": " ".join(sentences[half:]),
            },
        ))
    return notes, list(NEGATION_TERMS)


def _pick(rng) -> str:
    return NEGATION_TERMS[int(rng.integers(len(NEGATION_TERMS)))]
