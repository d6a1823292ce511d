from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from ragforge.cli import main

from conftest import make_pipeline_config
from mockserver import MockModelServer, scripted_rag_handler


@pytest.fixture
def server():
    gold: dict[str, str] = {}
    with MockModelServer(chat_handler=scripted_rag_handler(gold)) as srv:
        srv.gold_answers = gold
        yield srv


@pytest.fixture
def workspace(tmp_path, server):
    _, config_path = make_pipeline_config(tmp_path, server.base_url, n_docs=3,
                                          write_file=True)
    return tmp_path, config_path


def invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def test_usage_error_exit_2():
    assert invoke("ingest").exit_code == 2  # --config missing
    assert invoke("no-such-command").exit_code == 2


def test_ingest_writes_chunks(workspace):
    root, config_path = workspace
    result = invoke("ingest", "--config", config_path)
    assert result.exit_code == 0, result.output
    chunks = (root / "corpus" / "chunks.jsonl").read_text().splitlines()
    assert len(chunks) == 3
    assert "chunks.jsonl" in result.output


def test_operational_error_exit_1(workspace):
    root, config_path = workspace
    # Indexing before ingest: chunks.jsonl is missing.
    result = invoke("index", "--config", config_path)
    assert result.exit_code == 1
    assert "error:" in result.stderr


def test_full_stage_chain(workspace):
    root, config_path = workspace
    for cmd in ("ingest", "index", "choose-strategy", "datagen", "export-ft"):
        result = invoke(cmd, "--config", config_path)
        assert result.exit_code == 0, f"{cmd}: {result.output}{result.stderr}"
    corpus = root / "corpus"
    for name in ("chunks.jsonl", "bm25.bin", "embeddings.f32", "strategy.json",
                 "qa_pairs.jsonl", "embed_ft.jsonl", "batches.jsonl", "llm_ft.jsonl"):
        assert (corpus / name).exists(), name


def test_choose_strategy_defaults_semantic(workspace):
    root, config_path = workspace
    invoke("ingest", "--config", config_path)
    invoke("index", "--config", config_path)
    result = invoke("choose-strategy", "--config", config_path)
    assert result.exit_code == 0
    assert json.loads(result.output)["chosen"] == "semantic"
    assert json.loads((root / "corpus" / "strategy.json").read_text())["chosen"] == "semantic"


def test_answer_prints_to_stdout(workspace, server):
    root, config_path = workspace
    invoke("ingest", "--config", config_path)
    invoke("index", "--config", config_path)
    invoke("choose-strategy", "--config", config_path)
    server.gold_answers["Where is zq0marker?"] = "report zero has it"
    result = invoke("answer", "--config", config_path,
                    "--question", "Where is zq0marker?", "--n", 2)
    assert result.exit_code == 0
    assert result.stdout.strip() == "report zero has it"
    assert result.stderr.count("[") == 2  # ranked context ids on stderr


def test_eval_exact_mode_writes_report(workspace):
    root, config_path = workspace
    invoke("ingest", "--config", config_path)
    invoke("index", "--config", config_path)
    invoke("choose-strategy", "--config", config_path)
    dataset = root / "eval.jsonl"
    dataset.write_text(json.dumps(
        {"question": "Where is zq1marker?", "gold_answer": "nope"}) + "\n")
    out_dir = root / "out"
    result = invoke("eval", "--config", config_path, "--dataset", dataset,
                    "--mode", "exact", "--out-dir", out_dir)
    assert result.exit_code == 0
    assert "accuracy: 0.000" in result.output
    assert (out_dir / "report.json").exists()
    assert (out_dir / "report.md").exists()


def test_missing_config_file_exit_2(tmp_path):
    result = invoke("ingest", "--config", tmp_path / "absent.json")
    assert result.exit_code == 2
