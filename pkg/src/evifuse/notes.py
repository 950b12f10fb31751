"""Case-note parsing, negation scoping, and query construction.

A raw admission note is split into canonical sections, scanned for
dictionary terms, and stripped of negated mentions before the surviving
descriptors become the retrieval query.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator

from .errors import ExcludedNoteError, IngestionError, ValidationError
from .text import MeshDictionary, Token, token_strings, tokenize

log = logging.getLogger(__name__)

CANONICAL_SECTIONS = (
    "chief_complaint",
    "present_illness",
    "medical_history",
    "admission_medications",
    "allergies",
    "physical_exam",
    "family_history",
    "social_history",
)

# Default header aliases: uppercased, whitespace-squeezed header text -> canonical name.
DEFAULT_HEADER_ALIASES: dict[str, str] = {
    "CHIEF COMPLAINT": "chief_complaint",
    "PRESENT ILLNESS": "present_illness",
    "HISTORY OF PRESENT ILLNESS": "present_illness",
    "HPI": "present_illness",
    "MEDICAL HISTORY": "medical_history",
    "PAST MEDICAL HISTORY": "medical_history",
    "ADMISSION MEDICATIONS": "admission_medications",
    "MEDICATIONS ON ADMISSION": "admission_medications",
    "ALLERGIES": "allergies",
    "PHYSICAL EXAM": "physical_exam",
    "PHYSICAL EXAMINATION": "physical_exam",
    "FAMILY HISTORY": "family_history",
    "SOCIAL HISTORY": "social_history",
}

_HEADER_RE = re.compile(r"^\s*([A-Za-z][A-Za-z /()'-]{0,60}?)\s*:(.*)$")

_RENDER_HEADERS = {
    "chief_complaint": "CHIEF COMPLAINT",
    "present_illness": "PRESENT ILLNESS",
    "medical_history": "MEDICAL HISTORY",
    "admission_medications": "ADMISSION MEDICATIONS",
    "allergies": "ALLERGIES",
    "physical_exam": "PHYSICAL EXAM",
    "family_history": "FAMILY HISTORY",
    "social_history": "SOCIAL HISTORY",
}


@dataclass
class CaseNote:
    note_id: str
    sections: dict[str, str]  # canonical name -> text, insertion-ordered
    label: int | None = None

    def __post_init__(self):
        unknown = [s for s in self.sections if s not in CANONICAL_SECTIONS]
        if unknown:
            raise ValidationError(f"note {self.note_id!r} has non-canonical sections {unknown}")
        if not self.sections:
            raise ExcludedNoteError(self.note_id)

    @property
    def text(self) -> str:
        return "\n".join(self.sections.values())

    def render(self) -> str:
        """Canonical text form; parse_note on this output reproduces the note."""
        parts = []
        for name, body in self.sections.items():
            parts.append(f"{_RENDER_HEADERS[name]}: {body}")
        return "\n".join(parts)


@dataclass
class NegationLexicon:
    """Trigger phrases and scope parameters for negation detection.

    Only the negation attribute is modeled: pre-triggers scope forward,
    post-triggers scope backward, pseudo-triggers suppress triggers that are
    their prefixes ("no increase" hides "no"), and terminators cut a scope
    short. Scopes never cross sentence boundaries (., ;, newline).
    """

    pre_triggers: list[str]
    post_triggers: list[str]
    pseudo_triggers: list[str]
    terminators: list[str]
    window: int = 5

    def __post_init__(self):
        if self.window < 1:
            raise ValidationError(f"negation window must be >= 1, got {self.window}")
        pre = {tuple(token_strings(t)) for t in self.pre_triggers}
        post = {tuple(token_strings(t)) for t in self.post_triggers}
        pseudo = {tuple(token_strings(t)) for t in self.pseudo_triggers}
        if (pre & post) or (pre & pseudo) or (post & pseudo):
            raise ValidationError("negation trigger lists overlap")

    @classmethod
    def default(cls) -> "NegationLexicon":
        raw = resources.files("evifuse.data").joinpath("negation_lexicon.json").read_text("utf-8")
        return cls.from_dict(json.loads(raw))

    @classmethod
    def from_dict(cls, d: dict) -> "NegationLexicon":
        return cls(
            pre_triggers=list(d["pre_triggers"]),
            post_triggers=list(d["post_triggers"]),
            pseudo_triggers=list(d["pseudo_triggers"]),
            terminators=list(d["terminators"]),
            window=int(d.get("window", 5)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "NegationLexicon":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))


@dataclass
class Query:
    note_id: str
    mesh_terms: Counter
    raw_text: str
    empty: bool = False  # set when no term survived negation filtering


@dataclass
class HeaderRuleset:
    aliases: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_HEADER_ALIASES))

    def resolve(self, header: str) -> str | None:
        key = " ".join(header.upper().split())
        return self.aliases.get(key)


def parse_note(raw: str, note_id: str, ruleset: HeaderRuleset | None = None,
               label: int | None = None) -> CaseNote:
    """Split raw text on line-anchored `NAME:` headers into canonical sections.

    Text under unrecognized headers (and any preamble before the first
    header) is dropped. A note yielding no canonical section is excluded.
    """
    if not raw or not raw.strip():
        raise IngestionError(f"note {note_id!r} is empty")
    ruleset = ruleset or HeaderRuleset()
    sections: dict[str, list[str]] = {}
    current: str | None = None  # canonical name, or "" for an unknown header
    for line in raw.splitlines():
        m = _HEADER_RE.match(line)
        if m:
            canonical = ruleset.resolve(m.group(1))
            if canonical is not None:
                current = canonical
                sections.setdefault(canonical, [])
                rest = m.group(2).strip()
                if rest:
                    sections[canonical].append(rest)
                continue
            if _looks_like_header(m.group(1)):
                current = ""
                continue
        if current:
            sections[current].append(line.strip())
    cleaned = {name: "\n".join(parts).strip() for name, parts in sections.items()}
    ordered = {name: body for name, body in cleaned.items()}
    if not ordered:
        raise ExcludedNoteError(note_id)
    return CaseNote(note_id=note_id, sections=ordered, label=label)


def _looks_like_header(name: str) -> bool:
    words = name.split()
    return 0 < len(words) <= 6 and name.upper() == name


_SENTENCE_BREAK = {".", ";", "\n"}


def _sentence_bounds(text: str, tokens: list[Token]) -> list[tuple[int, int]]:
    """Token-index ranges [start, end) of each sentence (., ;, newline breaks)."""
    bounds = []
    start = 0
    for i, tok in enumerate(tokens):
        gap = text[tok.end: tokens[i + 1].start] if i + 1 < len(tokens) else text[tok.end:]
        if any(ch in _SENTENCE_BREAK for ch in gap):
            bounds.append((start, i + 1))
            start = i + 1
    if start < len(tokens):
        bounds.append((start, len(tokens)))
    return bounds


def detect_negated_spans(text: str, lexicon: NegationLexicon) -> set[tuple[int, int]]:
    """Token-index ranges [start, end) whose mentions are negated.

    Pre-triggers negate up to `window` following tokens, post-triggers the
    preceding `window`, both cut off at sentence boundaries and terminator
    tokens. A trigger that begins a pseudo-trigger phrase is inert.
    """
    tokens = tokenize(text)
    if not tokens:
        return set()
    words = [t.text for t in tokens]

    pre = sorted({tuple(token_strings(t)) for t in lexicon.pre_triggers}, key=len, reverse=True)
    post = sorted({tuple(token_strings(t)) for t in lexicon.post_triggers}, key=len, reverse=True)
    pseudo = sorted({tuple(token_strings(t)) for t in lexicon.pseudo_triggers},
                    key=len, reverse=True)
    term_first = {t[0] for t in (tuple(token_strings(t)) for t in lexicon.terminators) if t}

    def phrase_at(i: int, phrases) -> tuple[str, ...] | None:
        for p in phrases:
            if tuple(words[i:i + len(p)]) == p:
                return p
        return None

    spans: set[tuple[int, int]] = set()
    for sent_start, sent_end in _sentence_bounds(text, tokens):
        i = sent_start
        while i < sent_end:
            if phrase_at(i, pseudo):
                i += len(phrase_at(i, pseudo))
                continue
            pre_hit = phrase_at(i, pre)
            if pre_hit:
                scope_start = i + len(pre_hit)
                scope_end = min(scope_start + lexicon.window, sent_end)
                for j in range(scope_start, scope_end):
                    if words[j] in term_first:
                        scope_end = j
                        break
                if scope_end > scope_start:
                    spans.add((scope_start, scope_end))
                i += len(pre_hit)
                continue
            post_hit = phrase_at(i, post)
            if post_hit:
                scope_end = i
                scope_start = max(i - lexicon.window, sent_start)
                for j in range(scope_end - 1, scope_start - 1, -1):
                    if words[j] in term_first:
                        scope_start = j + 1
                        break
                if scope_end > scope_start:
                    spans.add((scope_start, scope_end))
                i += len(post_hit)
                continue
            i += 1
    return spans


def build_query(note: CaseNote, dictionary: MeshDictionary,
                lexicon: NegationLexicon) -> Query:
    """Dictionary matches over all sections, minus mentions inside negated spans.

    A descriptor's count is the number of surviving mentions across the
    whole note. When nothing survives, the query is flagged empty and sparse
    retrieval will return an empty ranking rather than fail.
    """
    if len(dictionary) == 0:
        raise ValidationError("dictionary is empty")
    counts: Counter = Counter()
    for body in note.sections.values():
        negated = detect_negated_spans(body, lexicon)
        for match in dictionary.find_matches(body):
            if any(match.token_start < end and start < match.token_end
                   for start, end in negated):
                continue
            counts[match.descriptor] += 1
    empty = not counts
    if empty:
        log.warning("note %s: no query term survived negation filtering", note.note_id)
    return Query(note_id=note.note_id, mesh_terms=counts, raw_text=note.text, empty=empty)


def read_notes(path: str | Path) -> Iterator[CaseNote]:
    """Ingest notes from a JSON-lines file or a directory of raw-text files.

    Raw files parse through the header splitter; their note_id is the file
    stem, and a `.labels.tsv` file (`note_id<TAB>label`) in the directory
    supplies labels when present.
    """
    path = Path(path)
    if path.is_dir():
        labels: dict[str, int] = {}
        labels_file = path / ".labels.tsv"
        if labels_file.exists():
            for line in labels_file.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    note_id, label = line.split("\t")
                    labels[note_id] = int(label)
        for file in sorted(path.glob("*.txt")):
            yield parse_note(file.read_text(encoding="utf-8"), note_id=file.stem,
                             label=labels.get(file.stem))
        return
    yield from read_notes_jsonl(path)


def read_notes_jsonl(path: str | Path) -> Iterator[CaseNote]:
    """Stream notes from JSON-lines: {"note_id":..., "sections":{...}, "label":int?}."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "note_id" not in obj or "sections" not in obj:
                raise IngestionError(f"{path}:{lineno}: note needs note_id and sections")
            label = obj.get("label")
            yield CaseNote(
                note_id=str(obj["note_id"]),
                sections={str(k): str(v) for k, v in obj["sections"].items()},
                label=int(label) if label is not None else None,
            )


def note_to_dict(note: CaseNote) -> dict:
    d: dict = {"note_id": note.note_id, "sections": note.sections}
    if note.label is not None:
        d["label"] = note.label
    return d
