"""Loaders for the engine's exported fine-tuning files.

embed_ft.jsonl  - {"query": str, "pos": str, "neg": str} per line
batches.jsonl   - {"batch": [line indices into embed_ft.jsonl]} per line
llm_ft.jsonl    - {"question": str, "answer": str, "contexts": [str],
                   "original_position": int} per line
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class TrainDataError(ValueError):
    pass


@dataclass(frozen=True)
class EmbedExample:
    query: str
    pos: str
    neg: str


@dataclass(frozen=True)
class Triplet:
    question: str
    answer: str
    contexts: tuple[str, ...]
    original_position: int


def _lines(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise TrainDataError(f"{path}: line {lineno}: {exc}") from exc
    return rows


def load_embed_examples(path: str | Path) -> list[EmbedExample]:
    examples = []
    for i, row in enumerate(_lines(path), 1):
        try:
            examples.append(EmbedExample(query=row["query"], pos=row["pos"],
                                         neg=row["neg"]))
        except KeyError as exc:
            raise TrainDataError(f"{path}: line {i}: missing field {exc}") from exc
    return examples


def load_batches(path: str | Path, n_examples: int) -> list[list[int]]:
    batches = []
    for i, row in enumerate(_lines(path), 1):
        if "batch" not in row:
            raise TrainDataError(f"{path}: line {i}: missing field 'batch'")
        batch = row["batch"]
        for idx in batch:
            if not 0 <= idx < n_examples:
                raise TrainDataError(
                    f"{path}: line {i}: index {idx} outside embed_ft ({n_examples} lines)")
        batches.append(list(batch))
    return batches


def load_triplets(path: str | Path) -> list[Triplet]:
    triplets = []
    for i, row in enumerate(_lines(path), 1):
        try:
            triplet = Triplet(question=row["question"], answer=row["answer"],
                              contexts=tuple(row["contexts"]),
                              original_position=row["original_position"])
        except KeyError as exc:
            raise TrainDataError(f"{path}: line {i}: missing field {exc}") from exc
        if not 0 <= triplet.original_position < len(triplet.contexts):
            raise TrainDataError(f"{path}: line {i}: original_position out of range")
        triplets.append(triplet)
    return triplets
