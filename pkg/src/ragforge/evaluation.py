"""Dataset loading, evaluation orchestration, and report emission."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .answer import AnswerRequest, exact_match, judged_accuracy, synthesize
from .corpus import CorpusHandle
from .errors import MissingGoldChunks, SchemaError, StorageError
from .gateway import ModelGateway
from .retrieve import Retriever, StrategyReport, evaluate_strategies

log = logging.getLogger(__name__)

MODE_EXACT = "exact"
MODE_JUDGE = "judge"


@dataclass(frozen=True)
class EvalItem:
    question: str
    gold_answer: str
    gold_chunk_ids: tuple[str, ...] | None = None


def load_dataset(path: str | Path) -> list[EvalItem]:
    """JSONL, one {"question","gold_answer","gold_chunk_ids"?} per line.

    All malformed lines are collected and reported in one SchemaError that
    cites their line numbers.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise StorageError(str(exc)) from exc
    items: list[EvalItem] = []
    problems: list[str] = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"line {lineno}: invalid JSON ({exc.msg})")
            continue
        question = obj.get("question")
        gold_answer = obj.get("gold_answer")
        if not isinstance(question, str) or not question:
            problems.append(f"line {lineno}: missing or empty \"question\"")
            continue
        if not isinstance(gold_answer, str) or not gold_answer:
            problems.append(f"line {lineno}: missing or empty \"gold_answer\"")
            continue
        gold_ids = obj.get("gold_chunk_ids")
        if gold_ids is not None and (not isinstance(gold_ids, list)
                                     or not all(isinstance(g, str) for g in gold_ids)):
            problems.append(f"line {lineno}: \"gold_chunk_ids\" must be a list of strings")
            continue
        items.append(EvalItem(
            question=question,
            gold_answer=gold_answer,
            gold_chunk_ids=tuple(gold_ids) if gold_ids is not None else None,
        ))
    if problems:
        raise SchemaError("; ".join(problems))
    return items


def run_retrieval_eval(items: list[EvalItem], k_eval: int, handle: CorpusHandle,
                       gateway: ModelGateway, rrf_k: float, fuse_depth: int) -> dict:
    """Strategy comparison over items that carry gold chunk labels."""
    missing = [i + 1 for i, item in enumerate(items) if not item.gold_chunk_ids]
    if missing:
        raise MissingGoldChunks(f"items without gold_chunk_ids: {missing}")
    report = evaluate_strategies(
        [(item.question, list(item.gold_chunk_ids)) for item in items],
        k_eval, handle.index, handle.store, gateway,
        rrf_k=rrf_k, fuse_depth=fuse_depth)
    return report.to_json()


def run_answer_eval(items: list[EvalItem], mode: str, retriever: Retriever,
                    handle: CorpusHandle, gen_gateway: ModelGateway,
                    judge_gateway: ModelGateway | None, n_contexts: int,
                    dataset_id: str, config_snapshot: dict,
                    retrieval_section: dict | None = None) -> dict:
    """Synthesize and score every item; per-item failures are recorded, not fatal."""
    if mode not in (MODE_EXACT, MODE_JUDGE):
        raise ValueError(f"unknown eval mode {mode!r}")
    t0 = time.monotonic()
    chunks_by_id = handle.chunks_by_id
    predictions: list[str | None] = []
    failures: list[str | None] = []
    for item in items:
        try:
            result = synthesize(AnswerRequest(question=item.question, n_contexts=n_contexts),
                                retriever, chunks_by_id, gen_gateway)
            predictions.append(result.answer)
            failures.append(None)
        except Exception as exc:
            log.warning("item %r failed: %s", item.question, exc)
            predictions.append(None)
            failures.append(str(exc))

    per_item = []
    n_true = 0
    invalid = 0
    if mode == MODE_EXACT:
        for item, pred, err in zip(items, predictions, failures):
            if pred is None:
                invalid += 1
                per_item.append({"question": item.question, "predicted": None,
                                 "verdict": "invalid", "error": err})
                continue
            ok = exact_match(pred, item.gold_answer)
            n_true += ok
            per_item.append({"question": item.question, "predicted": pred,
                             "verdict": "true" if ok else "false"})
    else:
        judged = [(item.question, item.gold_answer, pred)
                  for item, pred in zip(items, predictions) if pred is not None]
        if judged:
            _, verdicts = judged_accuracy(judged, judge_gateway)
        else:
            verdicts = []
        vi = iter(verdicts)
        for item, pred, err in zip(items, predictions, failures):
            if pred is None:
                invalid += 1
                per_item.append({"question": item.question, "predicted": None,
                                 "verdict": "invalid", "error": err})
                continue
            verdict = next(vi)
            if verdict.verdict == "true":
                n_true += 1
            elif verdict.verdict == "invalid":
                invalid += 1
            per_item.append({"question": item.question, "predicted": pred,
                             "verdict": verdict.verdict})

    accuracy = n_true / len(items) if items else 0.0
    return {
        "dataset_id": dataset_id,
        "retrieval": retrieval_section,
        "answers": {"mode": mode, "accuracy": accuracy, "invalid_count": invalid},
        "per_item": per_item,
        "config_snapshot": config_snapshot,
        "timings": {"total_ms": int((time.monotonic() - t0) * 1000)},
    }


def render_report_md(report: dict) -> str:
    lines = [f"# Evaluation report: {report['dataset_id']}", ""]
    retrieval = report.get("retrieval")
    if retrieval:
        lines += ["## Retrieval", "",
                  f"Metric: {retrieval['metric']}@{retrieval['k']}  |  chosen: **{retrieval['chosen']}**", "",
                  "| strategy | score |", "| --- | --- |"]
        for name, score in retrieval["scores"].items():
            lines.append(f"| {name} | {score:.3f} |")
        lines.append("")
    answers = report.get("answers")
    if answers:
        lines += ["## Answers", "",
                  f"Mode: {answers['mode']}  |  accuracy: {answers['accuracy']:.3f}"
                  f"  |  invalid: {answers['invalid_count']}", ""]
        if answers["mode"] == MODE_JUDGE:
            lines.append("Note: verdicts come from an LLM judge, not manual verification.")
            lines.append("")
        lines += ["| # | question | verdict |", "| --- | --- | --- |"]
        for i, row in enumerate(report.get("per_item", []), 1):
            q = row["question"].replace("|", "\\|")
            lines.append(f"| {i} | {q} | {row['verdict']} |")
        lines.append("")
    return "\n".join(lines)


def write_report(report: dict, directory: str | Path):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, ensure_ascii=False)
    (directory / "report.md").write_text(render_report_md(report), encoding="utf-8")
