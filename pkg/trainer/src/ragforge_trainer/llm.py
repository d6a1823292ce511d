"""LoRA supervised fine-tuning of a small causal LM on expanded-context triplets.

The base model is a byte-level toy transformer; adapters are trained with
loss on answer tokens only, and saved separately from the base weights.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .data import TrainDataError, Triplet, load_triplets
from .metrics import MetricsLog
from .schedule import warmup_constant_lr

log = logging.getLogger(__name__)

BOS, SEP, PAD = 256, 257, 258
VOCAB = 259
CONTEXT_DELIMITER = "\n---\n"


def encode_text(text: str) -> list[int]:
    return list(text.encode("utf-8"))


@dataclass(frozen=True)
class LlmTrainConfig:
    base_model_id: str = "byte-lm-tiny"
    adapter_rank: int = 32
    learning_rate: float = 5e-5
    global_batch_size: int = 64
    epochs: int = 3
    warmup_fraction: float = 0.10
    max_seq_len: int = 256
    model_dim: int = 32
    n_layers: int = 1

    def __post_init__(self):
        if self.adapter_rank <= 0:
            raise ValueError("adapter_rank must be > 0")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")


class LoRALinear(nn.Module):
    """base(x) + B @ A @ x with A, B the only trainable parameters."""

    def __init__(self, base: nn.Linear, rank: int):
        super().__init__()
        self.base = base
        for param in self.base.parameters():
            param.requires_grad = False
        self.lora_a = nn.Parameter(torch.randn(rank, base.in_features) / rank)
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + F.linear(F.linear(x, self.lora_a), self.lora_b)

    @property
    def adapter_parameters(self) -> int:
        return self.lora_a.numel() + self.lora_b.numel()


class Block(nn.Module):
    def __init__(self, dim: int, n_heads: int = 2):
        super().__init__()
        self.n_heads = n_heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.o_proj = nn.Linear(dim, dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(),
                                 nn.Linear(4 * dim, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.norm1(x)
        q = self.q_proj(h).view(b, t, self.n_heads, -1).transpose(1, 2)
        k = self.k_proj(h).view(b, t, self.n_heads, -1).transpose(1, 2)
        v = self.v_proj(h).view(b, t, self.n_heads, -1).transpose(1, 2)
        attn = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        x = x + self.o_proj(attn.transpose(1, 2).reshape(b, t, d))
        return x + self.mlp(self.norm2(x))


class TinyCausalLM(nn.Module):
    def __init__(self, dim: int = 32, n_layers: int = 1, max_seq_len: int = 256):
        super().__init__()
        self.max_seq_len = max_seq_len
        self.tok = nn.Embedding(VOCAB, dim)
        self.pos = nn.Embedding(max_seq_len, dim)
        self.blocks = nn.ModuleList(Block(dim) for _ in range(n_layers))
        self.norm = nn.LayerNorm(dim)
        self.lm_head = nn.Linear(dim, VOCAB)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.tok(ids) + self.pos(positions)
        for block in self.blocks:
            x = block(x)
        return self.lm_head(self.norm(x))


def apply_lora(model: TinyCausalLM, rank: int) -> TinyCausalLM:
    """Freeze the base weights and adapt each block's q and v projections."""
    for param in model.parameters():
        param.requires_grad = False
    for block in model.blocks:
        block.q_proj = LoRALinear(block.q_proj, rank)
        block.v_proj = LoRALinear(block.v_proj, rank)
    return model


def adapter_parameter_count(model: nn.Module) -> int:
    return sum(m.adapter_parameters for m in model.modules()
               if isinstance(m, LoRALinear))


def adapter_state_dict(model: nn.Module) -> dict:
    return {name: tensor for name, tensor in model.state_dict().items()
            if "lora_" in name}


def build_sequence(triplet: Triplet, max_seq_len: int) -> tuple[list[int], int, bool]:
    """(token ids, index where answer starts, whether the context was cut).

    Sequence: BOS, context bytes, SEP, question bytes, SEP, answer bytes.
    Overflow is resolved by truncating the context block from the left.
    """
    context = encode_text(CONTEXT_DELIMITER.join(triplet.contexts))
    question = encode_text(triplet.question)
    answer = encode_text(triplet.answer)
    overhead = 3 + len(question) + len(answer)  # BOS + 2 SEP + fixed parts
    room = max_seq_len - overhead
    truncated = len(context) > room
    if truncated:
        context = context[len(context) - max(room, 0):]
    ids = [BOS] + context + [SEP] + question + [SEP] + answer
    return ids[:max_seq_len], len(ids) - len(answer), truncated


@dataclass
class LlmTrainResult:
    adapter_path: Path
    metrics_path: Path
    epoch_losses: list[float]
    truncated_count: int
    adapter_parameters: int


def train_llm(llm_ft_path: str | Path, cfg: LlmTrainConfig, out_dir: str | Path,
              seed: int = 0) -> LlmTrainResult:
    triplets = load_triplets(llm_ft_path)
    if not triplets:
        raise TrainDataError(f"{llm_ft_path} is empty")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(seed)
    model = TinyCausalLM(dim=cfg.model_dim, n_layers=cfg.n_layers,
                         max_seq_len=cfg.max_seq_len)
    apply_lora(model, cfg.adapter_rank)
    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(trainable, lr=cfg.learning_rate)
    metrics = MetricsLog(out_dir / "metrics.jsonl")

    sequences = []
    truncated_count = 0
    for triplet in triplets:
        ids, answer_start, truncated = build_sequence(triplet, cfg.max_seq_len)
        truncated_count += truncated
        sequences.append((ids, answer_start))
    if truncated_count:
        log.warning("%d of %d items had their context truncated from the left",
                    truncated_count, len(sequences))

    batches = [sequences[i:i + cfg.global_batch_size]
               for i in range(0, len(sequences), cfg.global_batch_size)]
    total_steps = cfg.epochs * len(batches)
    epoch_losses = []
    step = 0
    for epoch in range(cfg.epochs):
        epoch_sum = 0.0
        for batch in batches:
            step += 1
            lr = warmup_constant_lr(cfg.learning_rate, step, total_steps,
                                    cfg.warmup_fraction)
            for group in optimizer.param_groups:
                group["lr"] = lr
            width = max(len(ids) for ids, _ in batch)
            input_ids = torch.full((len(batch), width), PAD, dtype=torch.long)
            labels = torch.full((len(batch), width), -100, dtype=torch.long)
            for row, (ids, answer_start) in enumerate(batch):
                input_ids[row, :len(ids)] = torch.tensor(ids)
                # Next-token loss on answer positions only.
                for t in range(answer_start - 1, len(ids) - 1):
                    labels[row, t] = ids[t + 1]
            logits = model(input_ids)
            loss = F.cross_entropy(logits.reshape(-1, VOCAB), labels.reshape(-1),
                                   ignore_index=-100)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_sum += loss.item()
            metrics.log(step, lr, loss.item(), epoch=epoch)
        epoch_losses.append(epoch_sum / len(batches))

    adapter_path = out_dir / "adapter.pt"
    torch.save({"adapter": adapter_state_dict(model),
                "rank": cfg.adapter_rank, "dim": cfg.model_dim,
                "n_layers": cfg.n_layers}, adapter_path)
    (out_dir / "train_config.json").write_text(
        json.dumps(cfg.__dict__, indent=2), encoding="utf-8")
    return LlmTrainResult(adapter_path=adapter_path, metrics_path=metrics.path,
                          epoch_losses=epoch_losses, truncated_count=truncated_count,
                          adapter_parameters=adapter_parameter_count(model))
