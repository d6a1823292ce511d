from __future__ import annotations

import numpy as np
import pytest

from ragforge.answer import (
    AnswerRequest,
    build_answer_prompt,
    exact_match,
    judged_accuracy,
    normalize_answer,
    synthesize,
)
from ragforge.corpus import EmbeddingStore, build_bm25
from ragforge.errors import EmptyCorpus
from ragforge.gateway import ModelGateway
from ragforge.ingest import Chunk
from ragforge.retrieve import SEMANTIC, RetrievalStrategy, Retriever

from conftest import StubEmbedGateway, make_gateway
from mockserver import MockModelServer


def make_chunk(cid: str, text: str, prelude: str = "", postlude: str = "") -> Chunk:
    return Chunk(chunk_id=cid, doc_id="d", core_text=text, prelude=prelude,
                 postlude=postlude, block_range=(0, 0), char_len=len(text))


def _setup(n_chunks: int = 3):
    chunks = [make_chunk(f"c{i}", f"Fact number {i} lives here.") for i in range(n_chunks)]
    index = build_bm25(chunks)
    store = EmbeddingStore(dims=4)
    rng = np.random.default_rng(1)
    store.upsert([(c.chunk_id, rng.standard_normal(4)) for c in chunks])
    embed_gw = StubEmbedGateway({}, default_dims=4)
    retriever = Retriever(index, store, embed_gw,
                          strategy=RetrievalStrategy(kind=SEMANTIC))
    return chunks, retriever


# -- synthesis --------------------------------------------------------------

def extract_question(prompt: str) -> str:
    return prompt.split("Question: ")[1].splitlines()[0]


def test_synthesize_echo_question():
    chunks, retriever = _setup(3)
    with MockModelServer(chat_handler=lambda p: extract_question(
            p["messages"][-1]["content"])) as server:
        gw = make_gateway(server.base_url)
        result = synthesize(AnswerRequest(question="What is fact 2?", n_contexts=5),
                            retriever, {c.chunk_id: c for c in chunks}, gw)
        gw.close()
    assert result.answer == "What is fact 2?"
    assert len(result.contexts) == 3  # min(N, corpus size)


def test_synthesize_single_chunk_prompt_contains_text_once():
    chunks, retriever = _setup(1)
    captured = {}

    def handler(payload):
        captured["prompt"] = payload["messages"][-1]["content"]
        return "done"

    with MockModelServer(chat_handler=handler) as server:
        gw = make_gateway(server.base_url)
        synthesize(AnswerRequest(question="q?", n_contexts=1),
                   retriever, {c.chunk_id: c for c in chunks}, gw)
        gw.close()
    assert captured["prompt"].count(chunks[0].core_text) == 1
    assert captured["prompt"].count("q?") == 1


def test_synthesize_contexts_follow_retriever_rank_order():
    chunks, retriever = _setup(10)
    with MockModelServer() as server:
        gw = make_gateway(server.base_url)
        result = synthesize(AnswerRequest(question="q?", n_contexts=3),
                            retriever, {c.chunk_id: c for c in chunks}, gw)
        gw.close()
    expected = retriever.retrieve("q?", 3)
    assert [cid for cid, _ in result.contexts] == [h.chunk_id for h in expected]
    assert list(result.scores) == [h.score for h in expected]


def test_synthesize_presents_overlap_text():
    chunk = make_chunk("c0", "Core text.", prelude="tail of prev.", postlude="head of next")
    index = build_bm25([chunk])
    store = EmbeddingStore(dims=2)
    store.upsert([("c0", np.array([1.0, 0.0]))])
    retriever = Retriever(index, store, StubEmbedGateway({}, default_dims=2),
                          strategy=RetrievalStrategy(kind=SEMANTIC))
    captured = {}

    def handler(payload):
        captured["prompt"] = payload["messages"][-1]["content"]
        return "x"

    with MockModelServer(chat_handler=handler) as server:
        gw = make_gateway(server.base_url)
        synthesize(AnswerRequest(question="q?"), retriever, {"c0": chunk}, gw)
        gw.close()
    assert "tail of prev.\nCore text.\nhead of next" in captured["prompt"]


def test_synthesize_empty_corpus():
    _, retriever = _setup(1)
    with pytest.raises(EmptyCorpus):
        synthesize(AnswerRequest(question="q?"), retriever, {}, None)


def test_prompt_delimits_contexts():
    prompt = build_answer_prompt(["ctx one", "ctx two"], "q?")
    assert "ctx one\n---\nctx two" in prompt


# -- exact match ------------------------------------------------------------

def test_exact_match_identity():
    assert exact_match("Paris", "Paris")


def test_exact_match_normalization():
    assert exact_match("The Eiffel Tower.", "eiffel tower")


def test_exact_match_differs():
    assert not exact_match("Paris", "London")


def test_normalize_idempotent():
    for text in ["The Eiffel Tower.", "a  b   c", "AN ANSWER, really!"]:
        once = normalize_answer(text)
        assert normalize_answer(once) == once


def test_exact_match_symmetric():
    assert exact_match("the cat", "cat") == exact_match("cat", "the cat")


# -- judged accuracy --------------------------------------------------------

def _items(n):
    return [(f"q{i}", f"gold{i}", f"pred{i}") for i in range(n)]


def test_all_true_accuracy_one():
    with MockModelServer(chat_handler=lambda p: "TRUE") as server:
        gw = make_gateway(server.base_url)
        accuracy, verdicts = judged_accuracy(_items(4), gw)
        gw.close()
    assert accuracy == 1.0
    assert all(v.verdict == "true" for v in verdicts)


def test_half_true_accuracy():
    state = {"n": 0}

    def handler(payload):
        state["n"] += 1
        return "TRUE" if state["n"] % 2 else "FALSE"

    with MockModelServer(chat_handler=handler) as server:
        gw = make_gateway(server.base_url)
        accuracy, _ = judged_accuracy(_items(4), gw)
        gw.close()
    assert accuracy == 0.5


def test_invalid_counts_in_denominator_only():
    replies = ["TRUE"] * 7 + ["FALSE"] * 2 + ["perhaps"]
    state = {"n": 0}

    def handler(payload):
        reply = replies[state["n"]]
        state["n"] += 1
        return reply

    with MockModelServer(chat_handler=handler) as server:
        gw = make_gateway(server.base_url)
        accuracy, verdicts = judged_accuracy(_items(10), gw)
        gw.close()
    assert accuracy == pytest.approx(0.7)
    counts = {v: sum(1 for x in verdicts if x.verdict == v)
              for v in ("true", "false", "invalid")}
    assert counts == {"true": 7, "false": 2, "invalid": 1}
    assert sum(counts.values()) == 10
