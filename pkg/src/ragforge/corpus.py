"""Chunk persistence plus the two retrieval structures.

A corpus directory holds:
  manifest.json    - corpus metadata
  chunks.jsonl     - one chunk per line
  bm25.bin         - inverted index, little-endian binary (format below)
  embeddings.f32   - row-major float32 vectors
  embeddings.ids   - one chunk_id per line, row order matching embeddings.f32

bm25.bin layout (all integers little-endian):
  magic "BM25" | version u16 | k1 f64 | b f64 | n_docs u32 | n_terms u32
  per doc (sorted by chunk_id): id_len u16, id utf-8, doc_len u32
  per term (sorted):            term_len u16, term utf-8, df u32,
                                df x (doc_index u32, tf u32)
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateChunkId,
    StorageError,
    VersionMismatch,
    ZeroVector,
)
from .ingest import Chunk, read_chunks_jsonl, write_chunks_jsonl

ANALYZER_VERSION = "unicode-words-1"
DEFAULT_K1 = 1.2
DEFAULT_B = 0.75

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def analyze(text: str) -> list[str]:
    """Lowercase, Unicode-aware word tokens. No stemming, no stopwords."""
    return [t for t in _WORD_RE.findall(text.lower()) if t.strip("_")]


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_len: dict[str, int]
    avgdl: float
    n_docs: int
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))


def build_bm25(chunks: list[Chunk], k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> InvertedIndex:
    """Index analyze(core_text) of every chunk."""
    doc_len: dict[str, int] = {}
    postings: dict[str, list[tuple[str, int]]] = {}
    for chunk in chunks:
        if chunk.chunk_id in doc_len:
            raise DuplicateChunkId(chunk.chunk_id)
        terms = analyze(chunk.core_text)
        doc_len[chunk.chunk_id] = len(terms)
        counts: dict[str, int] = {}
        for t in terms:
            counts[t] = counts.get(t, 0) + 1
        for t, tf in counts.items():
            postings.setdefault(t, []).append((chunk.chunk_id, tf))
    for plist in postings.values():
        plist.sort(key=lambda p: p[0])
    n_docs = len(doc_len)
    avgdl = sum(doc_len.values()) / n_docs if n_docs else 0.0
    return InvertedIndex(postings=postings, doc_len=doc_len, avgdl=avgdl,
                         n_docs=n_docs, k1=k1, b=b)


class EmbeddingStore:
    """Exact (non-approximate) dense vector store keyed by chunk_id."""

    def __init__(self, dims: int):
        if dims <= 0:
            raise ValueError("dims must be > 0")
        self.dims = dims
        self._vectors: dict[str, np.ndarray] = {}
        self._norms: dict[str, float] = {}
        self._matrix_cache: tuple[list[str], np.ndarray, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._vectors

    def ids(self) -> list[str]:
        return sorted(self._vectors)

    def vector(self, chunk_id: str) -> np.ndarray:
        return self._vectors[chunk_id]

    def norm(self, chunk_id: str) -> float:
        return self._norms[chunk_id]

    def upsert(self, pairs: list[tuple[str, np.ndarray]]):
        for chunk_id, vec in pairs:
            vec = np.asarray(vec, dtype=np.float32)
            if vec.shape != (self.dims,):
                raise DimensionMismatch(
                    f"{chunk_id}: expected {self.dims} dims, got {vec.shape}")
            norm = float(np.linalg.norm(vec.astype(np.float64)))
            if norm == 0.0:
                raise ZeroVector(chunk_id)
            self._vectors[chunk_id] = vec
            self._norms[chunk_id] = norm
        self._matrix_cache = None

    def matrix(self) -> tuple[list[str], np.ndarray, np.ndarray]:
        """(sorted ids, row-major vectors, row norms), cached until next upsert."""
        if self._matrix_cache is None:
            ids = self.ids()
            if ids:
                mat = np.stack([self._vectors[i] for i in ids])
                norms = np.array([self._norms[i] for i in ids])
            else:
                mat = np.zeros((0, self.dims), dtype=np.float32)
                norms = np.zeros(0)
            self._matrix_cache = (ids, mat, norms)
        return self._matrix_cache


@dataclass
class CorpusManifest:
    corpus_id: str
    chunk_count: int
    embedding_model_id: str
    embedding_dims: int
    analyzer_version: str = ANALYZER_VERSION
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


@dataclass
class CorpusHandle:
    """Everything loaded from one corpus directory."""
    manifest: CorpusManifest
    chunks: list[Chunk]
    index: InvertedIndex
    store: EmbeddingStore

    @property
    def chunks_by_id(self) -> dict[str, Chunk]:
        return {c.chunk_id: c for c in self.chunks}


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_MAGIC = b"BM25"
_VERSION = 1


def _write_bm25(index: InvertedIndex, path: Path):
    ids = sorted(index.doc_len)
    id_pos = {cid: i for i, cid in enumerate(ids)}
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Hdd", _VERSION, index.k1, index.b))
        fh.write(struct.pack("<II", index.n_docs, len(index.postings)))
        for cid in ids:
            raw = cid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<I", index.doc_len[cid]))
        for term in sorted(index.postings):
            raw = term.encode("utf-8")
            plist = index.postings[term]
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<I", len(plist)))
            for cid, tf in plist:
                fh.write(struct.pack("<II", id_pos[cid], tf))


def _read_bm25(path: Path) -> InvertedIndex:
    data = path.read_bytes()
    if data[:4] != _MAGIC:
        raise StorageError(f"{path}: bad magic")
    off = 4
    version, k1, b = struct.unpack_from("<Hdd", data, off)
    off += struct.calcsize("<Hdd")
    if version != _VERSION:
        raise VersionMismatch(f"bm25.bin format version {version}")
    n_docs, n_terms = struct.unpack_from("<II", data, off)
    off += 8
    ids, doc_len = [], {}
    for _ in range(n_docs):
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        cid = data[off:off + ln].decode("utf-8")
        off += ln
        (dl,) = struct.unpack_from("<I", data, off)
        off += 4
        ids.append(cid)
        doc_len[cid] = dl
    postings: dict[str, list[tuple[str, int]]] = {}
    for _ in range(n_terms):
        (ln,) = struct.unpack_from("<H", data, off)
        off += 2
        term = data[off:off + ln].decode("utf-8")
        off += ln
        (df,) = struct.unpack_from("<I", data, off)
        off += 4
        plist = []
        for _ in range(df):
            doc_i, tf = struct.unpack_from("<II", data, off)
            off += 8
            plist.append((ids[doc_i], tf))
        postings[term] = plist
    avgdl = sum(doc_len.values()) / n_docs if n_docs else 0.0
    return InvertedIndex(postings=postings, doc_len=doc_len, avgdl=avgdl,
                         n_docs=n_docs, k1=k1, b=b)


def save_corpus(directory: str | Path, manifest: CorpusManifest, chunks: list[Chunk],
                index: InvertedIndex, store: EmbeddingStore):
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        manifest.chunk_count = len(chunks)
        manifest.embedding_dims = store.dims
        with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest.__dict__, fh, indent=2)
        write_chunks_jsonl(chunks, directory / "chunks.jsonl")
        _write_bm25(index, directory / "bm25.bin")
        ids, mat, _ = store.matrix()
        mat.astype("<f4").tofile(directory / "embeddings.f32")
        (directory / "embeddings.ids").write_text(
            "".join(i + "\n" for i in ids), encoding="utf-8")
    except OSError as exc:
        raise StorageError(str(exc)) from exc


def load_corpus(directory: str | Path) -> CorpusHandle:
    directory = Path(directory)
    try:
        with open(directory / "manifest.json", encoding="utf-8") as fh:
            manifest = CorpusManifest(**json.load(fh))
        if manifest.analyzer_version != ANALYZER_VERSION:
            raise VersionMismatch(
                f"corpus analyzer {manifest.analyzer_version!r}, "
                f"engine expects {ANALYZER_VERSION!r}")
        chunks = read_chunks_jsonl(directory / "chunks.jsonl")
        index = _read_bm25(directory / "bm25.bin")
        ids = (directory / "embeddings.ids").read_text(encoding="utf-8").splitlines()
        store = EmbeddingStore(dims=manifest.embedding_dims)
        if ids:
            mat = np.fromfile(directory / "embeddings.f32", dtype="<f4")
            mat = mat.reshape(len(ids), manifest.embedding_dims)
            store.upsert(list(zip(ids, mat)))
    except FileNotFoundError as exc:
        raise StorageError(str(exc)) from exc
    except OSError as exc:
        raise StorageError(str(exc)) from exc
    return CorpusHandle(manifest=manifest, chunks=chunks, index=index, store=store)
