"""Tokenization and dictionary-based term matching.

Both the corpus side (tagging abstracts with controlled-vocabulary
descriptors) and the note side (building queries from clinical text) run
the same longest-match scan, so it lives here.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import IngestionError, ValidationError

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class Token:
    text: str
    start: int  # character offset into the source text
    end: int


def tokenize(text: str) -> list[Token]:
    """Lowercase word tokens with character offsets.

    A token is a maximal run of ASCII letters/digits in the lowercased
    text; whitespace and punctuation separate tokens.
    """
    lowered = text.lower()
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(lowered)]


def token_strings(text: str) -> list[str]:
    return [t.text for t in tokenize(text)]


@dataclass(frozen=True)
class TermMatch:
    descriptor: str
    token_start: int  # index into the token list
    token_end: int    # exclusive
    char_start: int
    char_end: int


class MeshDictionary:
    """Maps surface phrases (descriptors and their synonyms) to canonical descriptors.

    Phrases are compared token-wise and case-insensitively, so punctuation
    inside a phrase ("Respiration, Artificial") is irrelevant.
    """

    def __init__(self, entries: dict[str, str]):
        if not entries:
            raise ValidationError("dictionary has no entries")
        # phrase token tuple -> canonical descriptor
        self._phrases: dict[tuple[str, ...], str] = {}
        for surface, descriptor in entries.items():
            toks = tuple(token_strings(surface))
            if toks:
                self._phrases[toks] = descriptor
            canon = tuple(token_strings(descriptor))
            if canon:
                self._phrases.setdefault(canon, descriptor)
        if not self._phrases:
            raise ValidationError("dictionary entries contain no usable tokens")
        self._max_len = max(len(p) for p in self._phrases)

    def __len__(self) -> int:
        return len(self._phrases)

    @classmethod
    def from_tsv(cls, path: str | Path) -> "MeshDictionary":
        """Load `descriptor<TAB>synonym` lines; descriptors match themselves too."""
        entries: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise IngestionError(f"{path}:{lineno}: expected descriptor<TAB>synonym")
                descriptor, synonym = parts
                entries[synonym] = descriptor
                entries.setdefault(descriptor, descriptor)
        if not entries:
            raise ValidationError(f"dictionary file {path} is empty")
        return cls(entries)

    @classmethod
    def identity(cls, terms: list[str]) -> "MeshDictionary":
        """Every term is its own descriptor (used by synthetic fixtures)."""
        return cls({t: t for t in terms})

    def find_matches(self, text: str) -> list[TermMatch]:
        """Longest, non-overlapping matches scanning left to right.

        At each token position the longest dictionary phrase starting there
        wins and the scan resumes after it, so nested shorter phrases are
        never counted.
        """
        tokens = tokenize(text)
        matches: list[TermMatch] = []
        i = 0
        n = len(tokens)
        while i < n:
            best: tuple[int, str] | None = None
            limit = min(self._max_len, n - i)
            for length in range(limit, 0, -1):
                phrase = tuple(t.text for t in tokens[i:i + length])
                descriptor = self._phrases.get(phrase)
                if descriptor is not None:
                    best = (length, descriptor)
                    break
            if best is None:
                i += 1
                continue
            length, descriptor = best
            matches.append(TermMatch(
                descriptor=descriptor,
                token_start=i,
                token_end=i + length,
                char_start=tokens[i].start,
                char_end=tokens[i + length - 1].end,
            ))
            i += length
        return matches

    def term_counts(self, text: str) -> Counter:
        """Multiset of canonical descriptors found in the text."""
        counts: Counter = Counter()
        for m in self.find_matches(text):
            counts[m.descriptor] += 1
        return counts
