from __future__ import annotations

import json

import numpy as np
import pytest

from ragforge.corpus import CorpusHandle, CorpusManifest, EmbeddingStore, build_bm25
from ragforge.errors import MissingGoldChunks, SchemaError, StorageError
from ragforge.evaluation import (
    MODE_EXACT,
    MODE_JUDGE,
    EvalItem,
    load_dataset,
    run_answer_eval,
    run_retrieval_eval,
    write_report,
)
from ragforge.ingest import Chunk
from ragforge.retrieve import SEMANTIC, RetrievalStrategy, Retriever

from conftest import StubEmbedGateway, make_gateway
from mockserver import MockModelServer, scripted_rag_handler


def make_chunk(cid: str, text: str) -> Chunk:
    return Chunk(chunk_id=cid, doc_id="d", core_text=text, prelude="", postlude="",
                 block_range=(0, 0), char_len=len(text))


def _handle(n=3):
    chunks = [make_chunk(f"c{i}", f"Document text {i}.") for i in range(n)]
    index = build_bm25(chunks)
    store = EmbeddingStore(dims=4)
    for i, c in enumerate(chunks):
        v = np.zeros(4)
        v[i % 4] = 1.0
        store.upsert([(c.chunk_id, v)])
    manifest = CorpusManifest(corpus_id="t", chunk_count=n,
                              embedding_model_id="m", embedding_dims=4)
    return CorpusHandle(manifest=manifest, chunks=chunks, index=index, store=store)


# -- load_dataset -----------------------------------------------------------

def test_load_empty_file(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text("")
    assert load_dataset(path) == []


def test_load_valid_lines(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(
        '{"question":"q1","gold_answer":"a1"}\n'
        '{"question":"q2","gold_answer":"a2","gold_chunk_ids":["c1"]}\n'
        '{"question":"q3","gold_answer":"a3"}\n')
    items = load_dataset(path)
    assert [i.question for i in items] == ["q1", "q2", "q3"]
    assert items[1].gold_chunk_ids == ("c1",)
    assert items[0].gold_chunk_ids is None


def test_load_missing_question_cites_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"question":"q1","gold_answer":"a1"}\n{"gold_answer":"a2"}\n')
    with pytest.raises(SchemaError, match="line 2"):
        load_dataset(path)


def test_load_bad_json_cites_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"question":"q","gold_answer":"a"}\nnot json\n')
    with pytest.raises(SchemaError, match="line 2"):
        load_dataset(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(StorageError):
        load_dataset(tmp_path / "missing.jsonl")


# -- retrieval eval ---------------------------------------------------------

def test_retrieval_eval_requires_gold_ids():
    handle = _handle()
    items = [EvalItem(question="q", gold_answer="a")]
    with pytest.raises(MissingGoldChunks):
        run_retrieval_eval(items, 1, handle, StubEmbedGateway({}, 4), 60.0, 50)


def test_retrieval_eval_delegates():
    handle = _handle(3)
    gw = StubEmbedGateway({"q0": np.array([1.0, 0, 0, 0])}, default_dims=4)
    items = [EvalItem(question="q0", gold_answer="a", gold_chunk_ids=("c0",))]
    section = run_retrieval_eval(items, 1, handle, gw, 60.0, 50)
    assert section["chosen"] == SEMANTIC
    assert section["scores"][SEMANTIC] == 1.0
    assert section["metric"] == "hit_rate"
    assert section["k"] == 1


# -- answer eval ------------------------------------------------------------

def _retriever(handle):
    return Retriever(handle.index, handle.store, StubEmbedGateway({}, 4),
                     strategy=RetrievalStrategy(kind=SEMANTIC))


def extract_question(prompt):
    return prompt.split("Question: ")[1].splitlines()[0]


def test_closed_loop_judge_accuracy_one():
    handle = _handle(3)
    items = [EvalItem(question=f"q{i}", gold_answer=f"gold {i}") for i in range(4)]
    gold = {i.question: i.gold_answer for i in items}
    with MockModelServer(chat_handler=scripted_rag_handler(gold)) as server:
        gw = make_gateway(server.base_url)
        report = run_answer_eval(items, MODE_JUDGE, _retriever(handle), handle,
                                 gw, gw, 2, "ds", {"cfg": 1})
        gw.close()
    assert report["answers"]["accuracy"] == 1.0
    assert report["answers"]["invalid_count"] == 0


def test_exact_mode_normalized_match():
    handle = _handle(3)
    items = [EvalItem(question=f"q{i}", gold_answer="eiffel tower") for i in range(3)]

    def handler(payload):
        return "The Eiffel Tower."

    with MockModelServer(chat_handler=handler) as server:
        gw = make_gateway(server.base_url)
        report = run_answer_eval(items, MODE_EXACT, _retriever(handle), handle,
                                 gw, None, 2, "ds", {})
        gw.close()
    assert report["answers"]["accuracy"] == 1.0


def test_exact_mode_three_of_four():
    handle = _handle(3)
    items = [EvalItem(question=f"q{i}", gold_answer=f"gold {i}") for i in range(4)]

    def handler(payload):
        q = extract_question(payload["messages"][-1]["content"])
        i = int(q[1:])
        return f"gold {i}" if i < 3 else "wrong"

    with MockModelServer(chat_handler=handler) as server:
        gw = make_gateway(server.base_url)
        report = run_answer_eval(items, MODE_EXACT, _retriever(handle), handle,
                                 gw, None, 2, "ds", {})
        gw.close()
    assert report["answers"]["accuracy"] == 0.75


def test_per_item_failures_recorded_not_fatal():
    handle = _handle(3)
    items = [EvalItem(question=f"q{i}", gold_answer="a") for i in range(2)]
    state = {"n": 0}

    def handler(payload):
        state["n"] += 1
        if extract_question(payload["messages"][-1]["content"]) == "q0":
            return (500, {"error": "boom"})
        return "a"

    with MockModelServer(chat_handler=handler) as server:
        gw = make_gateway(server.base_url, max_attempts=1)
        report = run_answer_eval(items, MODE_EXACT, _retriever(handle), handle,
                                 gw, None, 2, "ds", {})
        gw.close()
    assert report["answers"]["invalid_count"] == 1
    assert report["answers"]["accuracy"] == 0.5
    assert report["per_item"][0]["verdict"] == "invalid"


def test_aggregate_consistent_with_per_item():
    handle = _handle(3)
    items = [EvalItem(question=f"q{i}", gold_answer=f"gold {i}") for i in range(5)]
    gold = {i.question: i.gold_answer for i in items}
    with MockModelServer(chat_handler=scripted_rag_handler(gold)) as server:
        gw = make_gateway(server.base_url)
        report = run_answer_eval(items, MODE_JUDGE, _retriever(handle), handle,
                                 gw, gw, 2, "ds", {})
        gw.close()
    n_true = sum(1 for row in report["per_item"] if row["verdict"] == "true")
    assert report["answers"]["accuracy"] == n_true / len(items)


def test_report_files_written(tmp_path):
    report = {"dataset_id": "ds", "retrieval": None,
              "answers": {"mode": "exact", "accuracy": 0.75, "invalid_count": 0},
              "per_item": [{"question": "q", "predicted": "p", "verdict": "true"}],
              "config_snapshot": {}, "timings": {"total_ms": 1}}
    write_report(report, tmp_path)
    loaded = json.loads((tmp_path / "report.json").read_text())
    assert loaded == report
    md = (tmp_path / "report.md").read_text()
    assert "0.750" in md and "| 1 |" in md
