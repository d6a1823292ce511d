"""Fine-tuning jobs consuming the engine's exported JSONL datasets."""

from .data import load_batches, load_embed_examples, load_triplets
from .embedding import EmbedTrainConfig, HashEncoder, info_nce_loss, train_embedding
from .llm import LlmTrainConfig, TinyCausalLM, adapter_parameter_count, train_llm
from .schedule import warmup_constant_lr
from .smoke import smoke_eval

__all__ = [
    "EmbedTrainConfig",
    "HashEncoder",
    "LlmTrainConfig",
    "TinyCausalLM",
    "adapter_parameter_count",
    "info_nce_loss",
    "load_batches",
    "load_embed_examples",
    "load_triplets",
    "smoke_eval",
    "train_embedding",
    "train_llm",
    "warmup_constant_lr",
]
