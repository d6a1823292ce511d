"""Answer generation over retrieved contexts, plus exact-match and judge scoring."""

from __future__ import annotations

import logging
import re
import string
import time
from dataclasses import dataclass

from .errors import EmptyCorpus, RagForgeError
from .gateway import ChatRequest, JudgeVerdict, ModelGateway, judge
from .ingest import Chunk
from .prompts import load_prompt
from .retrieve import Retriever, RetrievalStrategy

log = logging.getLogger(__name__)

CONTEXT_DELIMITER = "\n---\n"


@dataclass(frozen=True)
class AnswerRequest:
    question: str
    n_contexts: int = 5
    strategy_override: RetrievalStrategy | None = None
    max_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self):
        if not self.question:
            raise ValueError("question must be non-empty")
        if self.n_contexts < 1:
            raise ValueError("n_contexts must be >= 1")


@dataclass(frozen=True)
class AnswerResult:
    answer: str
    contexts: tuple[tuple[str, str], ...]  # (chunk_id, text as presented)
    scores: tuple[float, ...]
    prompt_chars: int
    latency_ms: int


def build_answer_prompt(contexts: list[str], question: str) -> str:
    template = load_prompt("answer_synthesis")
    return (template
            .replace("{context}", CONTEXT_DELIMITER.join(contexts))
            .replace("{question}", question))


def synthesize(req: AnswerRequest, retriever: Retriever,
               chunks_by_id: dict[str, Chunk], gateway: ModelGateway) -> AnswerResult:
    """Retrieve top-N, present each with its neighbor overlap, generate."""
    if not chunks_by_id:
        raise EmptyCorpus("no chunks loaded")
    start = time.monotonic()
    hits = retriever.retrieve(req.question, req.n_contexts, strategy=req.strategy_override)
    contexts = [(h.chunk_id, chunks_by_id[h.chunk_id].presented_text()) for h in hits]
    prompt = build_answer_prompt([text for _, text in contexts], req.question)
    answer = gateway.generate(ChatRequest(
        user=prompt, temperature=req.temperature, max_tokens=req.max_tokens))
    return AnswerResult(
        answer=answer,
        contexts=tuple(contexts),
        scores=tuple(h.score for h in hits),
        prompt_chars=len(prompt),
        latency_ms=int((time.monotonic() - start) * 1000),
    )


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Extractive-QA convention: lowercase, drop punctuation and articles,
    collapse whitespace."""
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLES.sub(" ", text)
    return " ".join(text.split())


def exact_match(predicted: str, gold: str) -> bool:
    return normalize_answer(predicted) == normalize_answer(gold)


def judged_accuracy(items: list[tuple[str, str, str]],
                    judge_gateway: ModelGateway) -> tuple[float, list[JudgeVerdict]]:
    """Accuracy = #true / #items; invalid verdicts stay in the denominator."""
    if not items:
        raise ValueError("items must be non-empty")
    verdicts: list[JudgeVerdict] = []
    for question, gold, predicted in items:
        try:
            verdicts.append(judge(judge_gateway, question, gold, predicted))
        except RagForgeError as exc:
            log.warning("judge call failed for %r: %s", question, exc)
            verdicts.append(JudgeVerdict(verdict="invalid", raw=f"<error: {exc}>"))
    n_true = sum(1 for v in verdicts if v.verdict == "true")
    return n_true / len(items), verdicts
