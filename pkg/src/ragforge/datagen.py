"""Synthetic fine-tuning data: QA pairs, contrastive examples, context triplets.

The retriever argument taken by the mining/triplet builders is any callable
(query, k) -> list[ScoredHit]; production wires in pre-fine-tune semantic
search, tests can substitute cheap fakes.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from .errors import CorpusTooSmall, RagForgeError, UnparseableCompletion
from .gateway import ChatRequest, ModelGateway
from .ingest import Chunk
from .prompts import load_prompt
from .retrieve import ScoredHit

log = logging.getLogger(__name__)

UNANSWERABLE_SENTINEL = "UNANSWERABLE"
ANSWER_PREFIX = "ANSWER:"

DEFAULT_N_SIMPLE = 3
DEFAULT_N_COMPLEX = 2
DEFAULT_POOL_K = 20
DEFAULT_EXPANDED_N = 5

_DIFFICULTY_INSTRUCTIONS = {
    "simple": "Each question must be answerable with a single sentence from the context.",
    "complex": "Each question must require information spanning multiple sentences within the context chunk.",
}

_NUMBERED_LINE = re.compile(r"^\s*\d+[.)]\s*(.+?)\s*$")

Retrieve = Callable[[str, int], "list[ScoredHit]"]


@dataclass(frozen=True)
class QAPair:
    chunk_id: str
    question: str
    answer: str
    difficulty: str  # "simple" | "complex"
    validated: bool = False

    def to_json(self) -> dict:
        return {"chunk_id": self.chunk_id, "question": self.question,
                "answer": self.answer, "difficulty": self.difficulty,
                "validated": self.validated}

    @classmethod
    def from_json(cls, obj: dict) -> "QAPair":
        return cls(**obj)


@dataclass(frozen=True)
class EmbedFTExample:
    question: str
    positive_chunk_id: str
    hard_negative_chunk_id: str

    def __post_init__(self):
        if self.hard_negative_chunk_id == self.positive_chunk_id:
            raise ValueError("hard negative must differ from positive")


@dataclass(frozen=True)
class FTBatch:
    examples: tuple[EmbedFTExample, ...]

    @property
    def size(self) -> int:
        return len(self.examples)


@dataclass(frozen=True)
class TripletFTExample:
    question: str
    answer: str
    context_chunk_ids: tuple[str, ...]
    original_position: int


# ---------------------------------------------------------------------------
# QA generation / validation
# ---------------------------------------------------------------------------

def _parse_numbered_list(text: str) -> list[str]:
    items = []
    for line in text.splitlines():
        m = _NUMBERED_LINE.match(line)
        if m:
            items.append(m.group(1))
    if not items:
        raise UnparseableCompletion("no numbered list in completion")
    return items


def generate_qa(chunk: Chunk, gateway: ModelGateway,
                n_simple: int = DEFAULT_N_SIMPLE,
                n_complex: int = DEFAULT_N_COMPLEX,
                max_tokens: int = 512) -> list[QAPair]:
    """One LLM call per difficulty class; returns unvalidated, answer-less pairs."""
    template = load_prompt("qa_generation")
    pairs: list[QAPair] = []
    for difficulty, count in (("simple", n_simple), ("complex", n_complex)):
        if count <= 0:
            continue
        prompt = (template
                  .replace("{n}", str(count))
                  .replace("{difficulty}", difficulty)
                  .replace("{difficulty_instruction}", _DIFFICULTY_INSTRUCTIONS[difficulty])
                  .replace("{context}", chunk.core_text))
        completion = gateway.generate(ChatRequest(user=prompt, max_tokens=max_tokens))
        try:
            questions = _parse_numbered_list(completion)
        except UnparseableCompletion:
            log.warning("chunk %s: %s generation output had no numbered list",
                        chunk.chunk_id, difficulty)
            continue
        for q in questions[:count]:
            pairs.append(QAPair(chunk_id=chunk.chunk_id, question=q, answer="",
                                difficulty=difficulty, validated=False))
    return pairs


def validate_qa(pairs: Sequence[QAPair], chunks_by_id: dict[str, Chunk],
                gateway: ModelGateway, max_tokens: int = 256) -> list[QAPair]:
    """Keep only answerable pairs; survivors carry the produced answer."""
    template = load_prompt("qa_validation")
    kept: list[QAPair] = []
    for pair in pairs:
        chunk = chunks_by_id[pair.chunk_id]
        prompt = (template
                  .replace("{context}", chunk.core_text)
                  .replace("{question}", pair.question))
        try:
            completion = gateway.generate(ChatRequest(user=prompt, max_tokens=max_tokens))
        except RagForgeError as exc:
            log.warning("dropping pair %r: validation call failed: %s", pair.question, exc)
            continue
        answer = completion.strip()
        if not answer or answer == UNANSWERABLE_SENTINEL:
            continue
        if answer.startswith(ANSWER_PREFIX):
            answer = answer[len(ANSWER_PREFIX):].strip()
        if not answer:
            continue
        kept.append(replace(pair, answer=answer, validated=True))
    return kept


# ---------------------------------------------------------------------------
# Contrastive examples
# ---------------------------------------------------------------------------

def mine_hard_negative(question: str, positive_chunk_id: str, retrieve: Retrieve,
                       pool_k: int = DEFAULT_POOL_K, rng_seed: int = 0,
                       all_chunk_ids: Sequence[str] | None = None) -> str:
    """Top-pool_k retrieval minus the positive, one uniform seeded draw.

    all_chunk_ids, when given, backs a fallback draw for queries whose pool
    is empty or positive-only (corpus must still have >= 2 chunks).
    """
    pool = [h.chunk_id for h in retrieve(question, pool_k)
            if h.chunk_id != positive_chunk_id]
    if not pool:
        if not all_chunk_ids:
            raise CorpusTooSmall("retrieval pool empty and no chunk id universe given")
        pool = sorted(set(all_chunk_ids) - {positive_chunk_id})
        if not pool:
            raise CorpusTooSmall("corpus has fewer than 2 chunks")
    return random.Random(rng_seed).choice(pool)


def build_batches(examples: Sequence[EmbedFTExample], batch_size: int,
                  rng_seed: int = 0) -> list[FTBatch]:
    """Seeded shuffle, then greedy first-fit keeping positives unique per batch."""
    if batch_size < 2:
        raise ValueError("batch_size must be >= 2")
    order = list(examples)
    random.Random(rng_seed).shuffle(order)
    batches: list[list[EmbedFTExample]] = []
    positives: list[set[str]] = []
    for ex in order:
        for i, batch in enumerate(batches):
            if len(batch) < batch_size and ex.positive_chunk_id not in positives[i]:
                batch.append(ex)
                positives[i].add(ex.positive_chunk_id)
                break
        else:
            batches.append([ex])
            positives.append({ex.positive_chunk_id})
    return [FTBatch(examples=tuple(b)) for b in batches]


def build_expanded_triplets(pairs: Sequence[QAPair], retrieve: Retrieve,
                            all_chunk_ids: Sequence[str], n_contexts: int = DEFAULT_EXPANDED_N,
                            rng_seed: int = 0) -> list[TripletFTExample]:
    """Per pair: top-(N-1) distractors excluding the source chunk, plus the
    source chunk, shuffled; the source's post-shuffle index is recorded."""
    if n_contexts < 1:
        raise ValueError("n_contexts must be >= 1")
    rng = random.Random(rng_seed)
    universe = sorted(set(all_chunk_ids))
    triplets = []
    for pair in pairs:
        want = min(n_contexts, len(universe)) - 1
        distractors: list[str] = []
        if want > 0:
            hits = retrieve(pair.question, n_contexts * 2)
            for hit in hits:
                if hit.chunk_id != pair.chunk_id and hit.chunk_id not in distractors:
                    distractors.append(hit.chunk_id)
                if len(distractors) == want:
                    break
            if len(distractors) < want:
                # Retrieval pool too shallow; top up deterministically.
                for cid in universe:
                    if cid != pair.chunk_id and cid not in distractors:
                        distractors.append(cid)
                    if len(distractors) == want:
                        break
        context_ids = distractors + [pair.chunk_id]
        rng.shuffle(context_ids)
        triplets.append(TripletFTExample(
            question=pair.question,
            answer=pair.answer,
            context_chunk_ids=tuple(context_ids),
            original_position=context_ids.index(pair.chunk_id),
        ))
    return triplets


# ---------------------------------------------------------------------------
# JSONL exports (the contract consumed by the trainer)
# ---------------------------------------------------------------------------

def export_embed_ft(examples: Sequence[EmbedFTExample], chunks_by_id: dict[str, Chunk],
                    path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({
                "query": ex.question,
                "pos": chunks_by_id[ex.positive_chunk_id].core_text,
                "neg": chunks_by_id[ex.hard_negative_chunk_id].core_text,
            }, ensure_ascii=False) + "\n")


def export_batches(batches: Sequence[FTBatch], examples: Sequence[EmbedFTExample],
                   path: str | Path):
    """Batches as line indices into embed_ft.jsonl."""
    index_of = {id(ex): i for i, ex in enumerate(examples)}
    with open(path, "w", encoding="utf-8") as fh:
        for batch in batches:
            fh.write(json.dumps({"batch": [index_of[id(ex)] for ex in batch.examples]}) + "\n")


def export_llm_ft(triplets: Sequence[TripletFTExample], chunks_by_id: dict[str, Chunk],
                  path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps({
                "question": t.question,
                "answer": t.answer,
                "contexts": [chunks_by_id[cid].presented_text() for cid in t.context_chunk_ids],
                "original_position": t.original_position,
            }, ensure_ascii=False) + "\n")


def write_qa_pairs(pairs: Sequence[QAPair], path: str | Path):
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_json(), ensure_ascii=False) + "\n")


def read_qa_pairs(path: str | Path) -> list[QAPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                pairs.append(QAPair.from_json(json.loads(line)))
    return pairs
