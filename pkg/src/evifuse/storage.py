"""Canonical artifact persistence.

Every binary artifact is framed the same way:

    magic (4 bytes) | format_version (u32 LE) | payload | fnv1a64(payload) (u64 LE)

Payloads use length-prefixed strings and fixed little-endian numerics, with
all maps and document sets emitted in sorted order, so saving the same
object twice produces bit-identical bytes.

Text-stage artifacts (queries, rankings, evidence, predictions) are
JSON-lines with a header line carrying the magic and version and a trailer
line carrying the checksum of the payload lines, keeping them greppable
while still integrity-checked.
"""

from __future__ import annotations

import io
import json
import struct
from collections import Counter
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import Document, OutcomeIndex, TfidfStats
from .errors import ChecksumError, StorageError, VersionMismatchError

INDEX_MAGIC = b"EVIX"
EMBED_MAGIC = b"EVEC"
MODEL_MAGIC = b"EVMD"
JSONL_MAGIC = "EVJL"

INDEX_VERSION = 1
EMBED_VERSION = 1
MODEL_VERSION = 1
JSONL_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def derive_seed(root_seed: int, stage: str) -> int:
    """Per-stage seed: hash of the root seed and the stage name."""
    return fnv1a64(f"{root_seed}:{stage}".encode("utf-8"))


# ---------------------------------------------------------------------------
# framing
# ---------------------------------------------------------------------------

def write_framed(path: str | Path, magic: bytes, version: int, payload: bytes) -> None:
    blob = magic + struct.pack("<I", version) + payload + struct.pack("<Q", fnv1a64(payload))
    Path(path).write_bytes(blob)


def read_framed(path: str | Path, magic: bytes, version: int) -> bytes:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != magic:
        raise StorageError(f"{path} is not a {magic.decode()} artifact")
    found_version = struct.unpack("<I", blob[4:8])[0]
    if found_version != version:
        raise VersionMismatchError(found_version, version)
    payload, trailer = blob[8:-8], blob[-8:]
    if struct.unpack("<Q", trailer)[0] != fnv1a64(payload):
        raise ChecksumError(str(path))
    return payload


class _Writer:
    def __init__(self):
        self._buf = io.BytesIO()

    def u8(self, v: int):
        self._buf.write(struct.pack("<B", v))

    def u32(self, v: int):
        self._buf.write(struct.pack("<I", v))

    def u64(self, v: int):
        self._buf.write(struct.pack("<Q", v))

    def f64(self, v: float):
        self._buf.write(struct.pack("<d", v))

    def string(self, s: str):
        raw = s.encode("utf-8")
        self.u32(len(raw))
        self._buf.write(raw)

    def counter(self, c: Counter):
        items = sorted(c.items())
        self.u32(len(items))
        for term, count in items:
            self.string(term)
            self.u32(count)

    def f64_array(self, a: np.ndarray):
        a = np.ascontiguousarray(a, dtype="<f8")
        self.u32(a.ndim)
        for dim in a.shape:
            self.u32(dim)
        self._buf.write(a.tobytes())

    def getvalue(self) -> bytes:
        return self._buf.getvalue()


class _Reader:
    def __init__(self, payload: bytes):
        self._buf = memoryview(payload)
        self._pos = 0

    def _take(self, n: int) -> memoryview:
        if self._pos + n > len(self._buf):
            raise StorageError("artifact payload truncated")
        view = self._buf[self._pos:self._pos + n]
        self._pos += n
        return view

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def string(self) -> str:
        n = self.u32()
        return bytes(self._take(n)).decode("utf-8")

    def counter(self) -> Counter:
        n = self.u32()
        c: Counter = Counter()
        for _ in range(n):
            term = self.string()
            c[term] = self.u32()
        return c

    def f64_array(self) -> np.ndarray:
        ndim = self.u32()
        shape = tuple(self.u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        raw = self._take(count * 8)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


# ---------------------------------------------------------------------------
# outcome index
# ---------------------------------------------------------------------------

def save_index(index: OutcomeIndex, path: str | Path, jsonl_export: bool = True) -> None:
    w = _Writer()
    w.string(index.outcome_id)
    w.u64(index.created_at)
    doc_ids = sorted(index.documents)
    w.u32(len(doc_ids))
    for doc_id in doc_ids:
        doc = index.documents[doc_id]
        w.string(doc.doc_id)
        w.string(doc.title)
        w.string(doc.body)
        w.counter(doc.mesh_terms)
    w.u32(index.tfidf_stats.doc_count)
    df_items = sorted(index.tfidf_stats.doc_freq.items())
    w.u32(len(df_items))
    for term, df in df_items:
        w.string(term)
        w.u32(df)
    write_framed(path, INDEX_MAGIC, INDEX_VERSION, w.getvalue())
    if jsonl_export:
        export = Path(str(path) + ".jsonl")
        with open(export, "w", encoding="utf-8") as fh:
            for doc_id in doc_ids:
                doc = index.documents[doc_id]
                fh.write(json.dumps({
                    "doc_id": doc.doc_id,
                    "title": doc.title,
                    "body": doc.body,
                    "mesh_terms": dict(sorted(doc.mesh_terms.items())),
                }, sort_keys=True) + "\n")


def load_index(path: str | Path) -> OutcomeIndex:
    r = _Reader(read_framed(path, INDEX_MAGIC, INDEX_VERSION))
    outcome_id = r.string()
    created_at = r.u64()
    n_docs = r.u32()
    documents: dict[str, Document] = {}
    for _ in range(n_docs):
        doc = Document(doc_id=r.string(), title=r.string(), body=r.string())
        doc.mesh_terms = r.counter()
        documents[doc.doc_id] = doc
    doc_count = r.u32()
    n_terms = r.u32()
    doc_freq = {}
    for _ in range(n_terms):
        term = r.string()
        doc_freq[term] = r.u32()
    return OutcomeIndex(
        outcome_id=outcome_id,
        documents=documents,
        tfidf_stats=TfidfStats(doc_count=doc_count, doc_freq=doc_freq),
        created_at=created_at,
    )


# ---------------------------------------------------------------------------
# embedding cache (packed binary + JSON-lines twin)
# ---------------------------------------------------------------------------

def save_embeddings(vectors: dict[str, np.ndarray], path: str | Path) -> None:
    """Packed cache: id table then little-endian float32 rows, ids sorted."""
    ids = sorted(vectors)
    if ids:
        dim = len(vectors[ids[0]])
        for vid in ids:
            if len(vectors[vid]) != dim:
                raise StorageError(
                    f"embedding cache has mixed dimensions: {dim} vs {len(vectors[vid])} ({vid})")
    else:
        dim = 0
    w = _Writer()
    w.u32(dim)
    w.u32(len(ids))
    for vid in ids:
        w.string(vid)
    for vid in ids:
        row = np.ascontiguousarray(vectors[vid], dtype="<f4")
        w._buf.write(row.tobytes())
    write_framed(path, EMBED_MAGIC, EMBED_VERSION, w.getvalue())


def load_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    r = _Reader(read_framed(path, EMBED_MAGIC, EMBED_VERSION))
    dim = r.u32()
    count = r.u32()
    ids = [r.string() for _ in range(count)]
    out: dict[str, np.ndarray] = {}
    for vid in ids:
        raw = r._take(dim * 4)
        out[vid] = np.frombuffer(raw, dtype="<f4").copy()
    return out


def save_embeddings_jsonl(vectors: dict[str, np.ndarray], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for vid in sorted(vectors):
            vec = [float(x) for x in np.asarray(vectors[vid], dtype=np.float32)]
            fh.write(json.dumps({"id": vid, "vector": vec}) + "\n")


def load_embeddings_jsonl(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out[str(obj["id"])] = np.asarray(obj["vector"], dtype=np.float32)
    return out


# ---------------------------------------------------------------------------
# JSON-lines stage artifacts (header + payload + checksum trailer)
# ---------------------------------------------------------------------------

def write_jsonl_artifact(path: str | Path, kind: str, records: Iterable[dict]) -> None:
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    payload = "".join(line + "\n" for line in lines)
    header = json.dumps({"magic": JSONL_MAGIC, "format_version": JSONL_VERSION, "kind": kind},
                        sort_keys=True)
    trailer = json.dumps({"checksum": f"{fnv1a64(payload.encode('utf-8')):016x}"}, sort_keys=True)
    Path(path).write_text(header + "\n" + payload + trailer + "\n", encoding="utf-8")


def read_jsonl_artifact(path: str | Path, kind: str) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if len(lines) < 2:
        raise StorageError(f"{path} is not a JSONL artifact")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise StorageError(f"{path}: bad artifact header: {exc}") from exc
    if header.get("magic") != JSONL_MAGIC:
        raise StorageError(f"{path} is not a {JSONL_MAGIC} artifact")
    if header.get("format_version") != JSONL_VERSION:
        raise VersionMismatchError(header.get("format_version"), JSONL_VERSION)
    if header.get("kind") != kind:
        raise StorageError(f"{path}: artifact kind {header.get('kind')!r}, expected {kind!r}")
    # trailer is the last non-empty line
    end = len(lines) - 1
    while end >= 0 and not lines[end]:
        end -= 1
    trailer = json.loads(lines[end])
    payload = "".join(line + "\n" for line in lines[1:end])
    if trailer.get("checksum") != f"{fnv1a64(payload.encode('utf-8')):016x}":
        raise ChecksumError(str(path))
    return [json.loads(line) for line in lines[1:end] if line]
