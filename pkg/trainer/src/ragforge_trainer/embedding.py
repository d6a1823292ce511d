"""Contrastive embedding fine-tuning with hard and in-batch negatives.

The loss for example i in a batch of size B is

    -log[ exp(s(q_i,p_i)/t) / ( exp(s(q_i,p_i)/t) + exp(s(q_i,n_i)/t)
                                + sum_{j != i} exp(s(q_i,p_j)/t) ) ]

with s = cosine similarity and t the softmax temperature. The denominator
has B+1 terms: the positive, the mined hard negative, and the other
examples' positives reused as in-batch negatives.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .data import EmbedExample, TrainDataError, load_batches, load_embed_examples
from .metrics import MetricsLog
from .schedule import warmup_constant_lr

_TOKEN_RE = re.compile(r"\w+")


@dataclass(frozen=True)
class EmbedTrainConfig:
    base_model_id: str = "hash-encoder-tiny"
    learning_rate: float = 1e-5
    global_batch_size: int = 16
    epochs: int = 3
    warmup_fraction: float = 0.10
    temperature: float = 0.02
    vocab_buckets: int = 1024
    embedding_dim: int = 64

    def __post_init__(self):
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


class HashEncoder(nn.Module):
    """Hashed bag-of-words encoder: token buckets -> mean embedding -> linear."""

    def __init__(self, buckets: int = 1024, dim: int = 64):
        super().__init__()
        self.buckets = buckets
        self.dim = dim
        self.embed = nn.EmbeddingBag(buckets, dim, mode="mean")
        self.proj = nn.Linear(dim, dim)

    def _bucket_ids(self, text: str) -> list[int]:
        tokens = _TOKEN_RE.findall(text.lower())
        if not tokens:
            return [0]
        # Stable across processes, unlike the builtin randomized str hash.
        return [int.from_bytes(t.encode("utf-8")[-8:], "little") % self.buckets
                for t in tokens]

    def forward(self, texts: list[str]) -> torch.Tensor:
        ids, offsets = [], []
        for text in texts:
            offsets.append(len(ids))
            ids.extend(self._bucket_ids(text))
        out = self.embed(torch.tensor(ids, dtype=torch.long),
                         torch.tensor(offsets, dtype=torch.long))
        return self.proj(torch.tanh(out))


def info_nce_loss(query: torch.Tensor, positive: torch.Tensor,
                  hard_negative: torch.Tensor, temperature: float) -> torch.Tensor:
    """Mean InfoNCE loss over the batch; inputs are [B, d] raw embeddings."""
    q = F.normalize(query, dim=1)
    p = F.normalize(positive, dim=1)
    n = F.normalize(hard_negative, dim=1)
    sims = q @ p.T                              # [B, B]; diagonal = positives
    b = sims.shape[0]
    pos = sims.diagonal().unsqueeze(1)          # [B, 1]
    hard = (q * n).sum(dim=1, keepdim=True)     # [B, 1]
    off_diag = sims[~torch.eye(b, dtype=torch.bool)].reshape(b, b - 1)
    logits = torch.cat([pos, hard, off_diag], dim=1) / temperature
    targets = torch.zeros(b, dtype=torch.long)
    return F.cross_entropy(logits, targets)


def check_batches(examples: list[EmbedExample], batches: list[list[int]],
                  max_size: int):
    """Enforce the exporter's invariants before any training step."""
    for i, batch in enumerate(batches):
        if len(batch) > max_size:
            raise TrainDataError(
                f"batch {i} has {len(batch)} examples, config allows {max_size}")
        positives = [examples[idx].pos for idx in batch]
        if len(positives) != len(set(positives)):
            raise TrainDataError(f"batch {i} repeats a positive context")


@dataclass
class EmbedTrainResult:
    artifact_path: Path
    metrics_path: Path
    losses: list[float]


def train_embedding(embed_ft_path: str | Path, batches_path: str | Path,
                    cfg: EmbedTrainConfig, out_dir: str | Path,
                    seed: int = 0) -> EmbedTrainResult:
    examples = load_embed_examples(embed_ft_path)
    if not examples:
        raise TrainDataError(f"{embed_ft_path} is empty")
    batches = load_batches(batches_path, len(examples))
    if not batches:
        raise TrainDataError(f"{batches_path} is empty")
    check_batches(examples, batches, cfg.global_batch_size)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)
    model = HashEncoder(buckets=cfg.vocab_buckets, dim=cfg.embedding_dim)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)
    metrics = MetricsLog(out_dir / "metrics.jsonl")

    total_steps = cfg.epochs * len(batches)
    losses = []
    step = 0
    for epoch in range(cfg.epochs):
        for batch in batches:
            step += 1
            lr = warmup_constant_lr(cfg.learning_rate, step, total_steps,
                                    cfg.warmup_fraction)
            for group in optimizer.param_groups:
                group["lr"] = lr
            rows = [examples[idx] for idx in batch]
            loss = info_nce_loss(model([r.query for r in rows]),
                                 model([r.pos for r in rows]),
                                 model([r.neg for r in rows]),
                                 cfg.temperature)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
            metrics.log(step, lr, loss.item(), epoch=epoch)

    artifact = out_dir / "embedding_model.pt"
    torch.save({"state_dict": model.state_dict(),
                "buckets": cfg.vocab_buckets, "dim": cfg.embedding_dim}, artifact)
    (out_dir / "train_config.json").write_text(
        json.dumps(cfg.__dict__, indent=2), encoding="utf-8")
    return EmbedTrainResult(artifact_path=artifact,
                            metrics_path=metrics.path, losses=losses)


def load_encoder(artifact_path: str | Path) -> HashEncoder:
    payload = torch.load(artifact_path, weights_only=True)
    model = HashEncoder(buckets=payload["buckets"], dim=payload["dim"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
