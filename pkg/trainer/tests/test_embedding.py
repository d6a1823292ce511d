from __future__ import annotations

import json
import math
import random

import pytest
import torch

from ragforge_trainer.data import TrainDataError
from ragforge_trainer.embedding import (
    EmbedTrainConfig,
    HashEncoder,
    info_nce_loss,
    load_encoder,
    train_embedding,
)
from ragforge_trainer.metrics import read_metrics
from ragforge_trainer.smoke import hit_at_1, smoke_eval


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def toy_task(n: int = 64):
    """Separable retrieval task: each query shares a rare token with its context."""
    rng = random.Random(4)
    filler = ["the", "report", "shows", "results", "for", "section"]
    rows = []
    for i in range(n):
        key = f"zkey{i:03d}"
        rows.append({
            "query": f"what about {key} {' '.join(rng.choices(filler, k=3))}",
            "pos": f"{key} details {' '.join(rng.choices(filler, k=6))}",
            "neg": f"zkey{(i + 1) % n:03d} other {' '.join(rng.choices(filler, k=6))}",
        })
    return rows


def toy_files(tmp_path, n=64, batch_size=16):
    rows = toy_task(n)
    write_jsonl(tmp_path / "embed_ft.jsonl", rows)
    batches = [{"batch": list(range(i, i + batch_size))}
               for i in range(0, n, batch_size)]
    write_jsonl(tmp_path / "batches.jsonl", batches)
    return tmp_path / "embed_ft.jsonl", tmp_path / "batches.jsonl", rows


# -- loss function -----------------------------------------------------------

def test_infinite_temperature_limit_ln_b_plus_1():
    torch.manual_seed(0)
    for b in (1, 4, 16):
        q = torch.randn(b, 8)
        p = torch.randn(b, 8)
        n = torch.randn(b, 8)
        loss = info_nce_loss(q, p, n, temperature=1e9)
        assert loss.item() == pytest.approx(math.log(b + 1), abs=1e-4)


def test_loss_low_when_positive_aligned():
    b, d = 4, 8
    q = torch.eye(b, d)
    p = torch.eye(b, d)             # positives identical to queries
    n = -torch.eye(b, d)            # hard negatives opposite
    loss = info_nce_loss(q, p, n, temperature=0.02)
    assert loss.item() < 1e-3


def test_loss_invariant_to_batch_permutation():
    torch.manual_seed(1)
    b = 8
    q, p, n = torch.randn(b, 16), torch.randn(b, 16), torch.randn(b, 16)
    base = info_nce_loss(q, p, n, temperature=0.02).item()
    for seed in range(5):
        perm = torch.randperm(b, generator=torch.Generator().manual_seed(seed))
        permuted = info_nce_loss(q[perm], p[perm], n[perm], temperature=0.02).item()
        assert permuted == pytest.approx(base, rel=1e-5)


# -- training ----------------------------------------------------------------

def test_toy_run_halves_loss_and_beats_base(tmp_path):
    embed_path, batches_path, rows = toy_files(tmp_path)
    cfg = EmbedTrainConfig(learning_rate=5e-3, epochs=3)  # toy-scale lr
    result = train_embedding(embed_path, batches_path, cfg, tmp_path / "out", seed=0)
    assert result.losses[-1] <= 0.5 * result.losses[0]

    pairs = [(r["query"], r["pos"]) for r in rows]
    fine_tuned = load_encoder(result.artifact_path)
    torch.manual_seed(0)
    base = HashEncoder(buckets=cfg.vocab_buckets, dim=cfg.embedding_dim)
    report = smoke_eval(fine_tuned, base, pairs)
    assert report.hit_at_1_fine_tuned > report.hit_at_1_base
    assert not report.flagged


def test_scheduler_log_contract(tmp_path):
    embed_path, batches_path, _ = toy_files(tmp_path)
    cfg = EmbedTrainConfig(learning_rate=1e-3, epochs=5, warmup_fraction=0.10)
    result = train_embedding(embed_path, batches_path, cfg, tmp_path / "out", seed=0)
    records = read_metrics(result.metrics_path)
    total = len(records)
    warmup = math.ceil(total * cfg.warmup_fraction)
    for rec in records:
        expected = (cfg.learning_rate * rec["step"] / warmup
                    if rec["step"] <= warmup else cfg.learning_rate)
        assert rec["lr"] == pytest.approx(expected)
        assert {"step", "lr", "loss"} <= set(rec)


def test_seed_reproducible_loss_curve(tmp_path):
    embed_path, batches_path, _ = toy_files(tmp_path)
    cfg = EmbedTrainConfig(learning_rate=1e-3, epochs=2)
    a = train_embedding(embed_path, batches_path, cfg, tmp_path / "a", seed=7)
    b = train_embedding(embed_path, batches_path, cfg, tmp_path / "b", seed=7)
    assert a.losses == pytest.approx(b.losses, rel=1e-6)
    c = train_embedding(embed_path, batches_path, cfg, tmp_path / "c", seed=8)
    assert a.losses != pytest.approx(c.losses, rel=1e-6)


def test_duplicate_positive_in_batch_rejected(tmp_path):
    rows = toy_task(4)
    rows[1]["pos"] = rows[0]["pos"]
    write_jsonl(tmp_path / "embed_ft.jsonl", rows)
    write_jsonl(tmp_path / "batches.jsonl", [{"batch": [0, 1, 2, 3]}])
    with pytest.raises(TrainDataError, match="repeats a positive"):
        train_embedding(tmp_path / "embed_ft.jsonl", tmp_path / "batches.jsonl",
                        EmbedTrainConfig(), tmp_path / "out")


def test_oversized_batch_rejected(tmp_path):
    embed_path, batches_path, _ = toy_files(tmp_path, n=8, batch_size=8)
    cfg = EmbedTrainConfig(global_batch_size=4)
    with pytest.raises(TrainDataError, match="config allows 4"):
        train_embedding(embed_path, batches_path, cfg, tmp_path / "out")


def test_empty_dataset_errors_before_any_step(tmp_path):
    (tmp_path / "embed_ft.jsonl").write_text("")
    (tmp_path / "batches.jsonl").write_text("")
    with pytest.raises(TrainDataError):
        train_embedding(tmp_path / "embed_ft.jsonl", tmp_path / "batches.jsonl",
                        EmbedTrainConfig(), tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_batch_index_out_of_range(tmp_path):
    write_jsonl(tmp_path / "embed_ft.jsonl", toy_task(4))
    write_jsonl(tmp_path / "batches.jsonl", [{"batch": [0, 9]}])
    with pytest.raises(TrainDataError, match="index 9"):
        train_embedding(tmp_path / "embed_ft.jsonl", tmp_path / "batches.jsonl",
                        EmbedTrainConfig(), tmp_path / "out")


# -- smoke eval --------------------------------------------------------------

def test_smoke_eval_identity_not_flagged():
    torch.manual_seed(3)
    model = HashEncoder(buckets=64, dim=16)
    pairs = [(f"query {i}", f"context {i}") for i in range(5)]
    report = smoke_eval(model, model, pairs)
    assert report.hit_at_1_fine_tuned == report.hit_at_1_base
    assert not report.flagged


def test_smoke_eval_empty_split_errors():
    model = HashEncoder(buckets=64, dim=16)
    with pytest.raises(ValueError):
        hit_at_1(model, [])
