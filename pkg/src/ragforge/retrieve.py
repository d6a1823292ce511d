"""Semantic, lexical, and hybrid retrieval plus validation-driven strategy choice."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import EmbeddingStore, InvertedIndex, analyze
from .errors import (
    EmptyStore,
    EmptyValidationSet,
    NoStrategyChosen,
    UnknownGoldId,
)
from .gateway import ModelGateway

SEMANTIC = "semantic"
BM25 = "bm25"
HYBRID = "hybrid"

DEFAULT_RRF_K = 60.0
DEFAULT_FUSE_DEPTH = 50

# Preference at equal validation score: cheaper/simpler first.
_TIE_ORDER = {SEMANTIC: 0, HYBRID: 1, BM25: 2}


@dataclass(frozen=True)
class ScoredHit:
    chunk_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RetrievalStrategy:
    kind: str
    rrf_k: float = DEFAULT_RRF_K
    fuse_depth: int = DEFAULT_FUSE_DEPTH

    def __post_init__(self):
        if self.kind not in (SEMANTIC, BM25, HYBRID):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.rrf_k <= 0:
            raise ValueError("rrf_k must be > 0")


@dataclass
class StrategyReport:
    metric_name: str
    per_strategy: dict[str, float]
    chosen: str
    k_eval: int
    mrr: dict[str, float] | None = None

    def to_json(self) -> dict:
        obj = {
            "metric": self.metric_name,
            "k": self.k_eval,
            "scores": self.per_strategy,
            "chosen": self.chosen,
        }
        if self.mrr is not None:
            obj["mrr"] = self.mrr
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "StrategyReport":
        return cls(metric_name=obj["metric"], per_strategy=obj["scores"],
                   chosen=obj["chosen"], k_eval=obj["k"], mrr=obj.get("mrr"))


def _rank(scored: list[tuple[str, float]], k: int) -> list[ScoredHit]:
    scored.sort(key=lambda p: (-p[1], p[0]))
    return [ScoredHit(chunk_id=cid, score=s, rank=i + 1)
            for i, (cid, s) in enumerate(scored[:k])]


def semantic_search_vec(query_vec: np.ndarray, k: int, store: EmbeddingStore) -> list[ScoredHit]:
    """Exact cosine top-k over every stored vector."""
    if len(store) == 0:
        raise EmptyStore("embedding store is empty")
    ids, mat, norms = store.matrix()
    q = np.asarray(query_vec, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0:
        scores = np.zeros(len(ids))
    else:
        scores = (mat @ q) / (norms * qn)
    return _rank(list(zip(ids, scores.tolist())), k)


def semantic_search(query: str, k: int, gateway: ModelGateway, store: EmbeddingStore) -> list[ScoredHit]:
    [qvec] = gateway.embed_batch([query])
    return semantic_search_vec(qvec, k, store)


def bm25_idf(index: InvertedIndex, term: str) -> float:
    df = index.df(term)
    # Smoothed form: non-negative for every df.
    return math.log(1.0 + (index.n_docs - df + 0.5) / (df + 0.5))


def bm25_search(query: str, k: int, index: InvertedIndex) -> list[ScoredHit]:
    """Okapi BM25 over the analyzed query; zero-score chunks are omitted."""
    scores: dict[str, float] = {}
    k1, b = index.k1, index.b
    for term in analyze(query):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = bm25_idf(index, term)
        for chunk_id, tf in plist:
            dl = index.doc_len[chunk_id]
            denom = tf + k1 * (1.0 - b + b * dl / index.avgdl)
            scores[chunk_id] = scores.get(chunk_id, 0.0) + idf * tf * (k1 + 1.0) / denom
    return _rank([(cid, s) for cid, s in scores.items() if s > 0.0], k)


def rrf_fuse(lists: list[list[ScoredHit]], rrf_k: float, k: int) -> list[ScoredHit]:
    """Reciprocal rank fusion: score(d) = sum over lists of 1/(rrf_k + rank)."""
    fused: dict[str, float] = {}
    for hits in lists:
        for hit in hits:
            fused[hit.chunk_id] = fused.get(hit.chunk_id, 0.0) + 1.0 / (rrf_k + hit.rank)
    return _rank(list(fused.items()), k)


class Retriever:
    """Dispatches queries to the locked strategy over an immutable corpus."""

    def __init__(self, index: InvertedIndex, store: EmbeddingStore,
                 gateway: ModelGateway, strategy: RetrievalStrategy | None = None):
        self.index = index
        self.store = store
        self.gateway = gateway
        self.strategy = strategy

    def lock(self, strategy: RetrievalStrategy):
        self.strategy = strategy

    def retrieve(self, query: str, k: int,
                 strategy: RetrievalStrategy | None = None) -> list[ScoredHit]:
        strategy = strategy or self.strategy
        if strategy is None:
            raise NoStrategyChosen("no retrieval strategy locked and no override given")
        if strategy.kind == SEMANTIC:
            return semantic_search(query, k, self.gateway, self.store)
        if strategy.kind == BM25:
            return bm25_search(query, k, self.index)
        dense = semantic_search(query, strategy.fuse_depth, self.gateway, self.store)
        sparse = bm25_search(query, strategy.fuse_depth, self.index)
        return rrf_fuse([dense, sparse], strategy.rrf_k, k)


def evaluate_strategies(validation: list[tuple[str, list[str]]], k_eval: int,
                        index: InvertedIndex, store: EmbeddingStore,
                        gateway: ModelGateway,
                        rrf_k: float = DEFAULT_RRF_K,
                        fuse_depth: int = DEFAULT_FUSE_DEPTH) -> StrategyReport:
    """Hit-rate@k_eval per strategy on the validation set; argmax wins.

    MRR is computed alongside for the report but never drives the choice.
    """
    if not validation:
        raise EmptyValidationSet("validation set is empty")
    known = set(index.doc_len) | set(store.ids())
    for _, gold_ids in validation:
        for gid in gold_ids:
            if gid not in known:
                raise UnknownGoldId(gid)

    hits = {SEMANTIC: 0, BM25: 0, HYBRID: 0}
    rr = {SEMANTIC: 0.0, BM25: 0.0, HYBRID: 0.0}
    depth = max(k_eval, fuse_depth)
    for question, gold_ids in validation:
        gold = set(gold_ids)
        [qvec] = gateway.embed_batch([question])
        dense = semantic_search_vec(qvec, depth, store)
        sparse = bm25_search(question, depth, index)
        per = {
            SEMANTIC: dense[:k_eval],
            BM25: sparse[:k_eval],
            HYBRID: rrf_fuse([dense[:fuse_depth], sparse[:fuse_depth]], rrf_k, k_eval),
        }
        for name, ranked in per.items():
            gold_ranks = [h.rank for h in ranked if h.chunk_id in gold]
            if gold_ranks:
                hits[name] += 1
                rr[name] += 1.0 / min(gold_ranks)

    n = len(validation)
    per_strategy = {name: hits[name] / n for name in (SEMANTIC, BM25, HYBRID)}
    mrr = {name: rr[name] / n for name in (SEMANTIC, BM25, HYBRID)}
    chosen = min(per_strategy, key=lambda name: (-per_strategy[name], _TIE_ORDER[name]))
    return StrategyReport(metric_name="hit_rate", per_strategy=per_strategy,
                          chosen=chosen, k_eval=k_eval, mrr=mrr)


def save_strategy(report: StrategyReport, path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)


def load_strategy(path: str | Path) -> StrategyReport:
    with open(path, encoding="utf-8") as fh:
        return StrategyReport.from_json(json.load(fh))
