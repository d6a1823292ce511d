"""Command line entry points for the two fine-tuning jobs."""

from __future__ import annotations

import argparse
import sys

from .data import TrainDataError
from .embedding import EmbedTrainConfig, train_embedding
from .llm import LlmTrainConfig, train_llm


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ragforge-train")
    sub = parser.add_subparsers(dest="command", required=True)

    embed = sub.add_parser("embed", help="contrastive embedding fine-tune")
    embed.add_argument("--embed-ft", required=True)
    embed.add_argument("--batches", required=True)
    embed.add_argument("--out-dir", required=True)
    embed.add_argument("--learning-rate", type=float, default=1e-5)
    embed.add_argument("--batch-size", type=int, default=16)
    embed.add_argument("--epochs", type=int, default=3)
    embed.add_argument("--temperature", type=float, default=0.02)
    embed.add_argument("--seed", type=int, default=0)

    llm = sub.add_parser("llm", help="LoRA LLM fine-tune")
    llm.add_argument("--llm-ft", required=True)
    llm.add_argument("--out-dir", required=True)
    llm.add_argument("--rank", type=int, default=32)
    llm.add_argument("--learning-rate", type=float, default=5e-5)
    llm.add_argument("--batch-size", type=int, default=64)
    llm.add_argument("--epochs", type=int, default=3)
    llm.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.command == "embed":
            cfg = EmbedTrainConfig(learning_rate=args.learning_rate,
                                   global_batch_size=args.batch_size,
                                   epochs=args.epochs,
                                   temperature=args.temperature)
            result = train_embedding(args.embed_ft, args.batches, cfg,
                                     args.out_dir, seed=args.seed)
            print(f"wrote {result.artifact_path} "
                  f"(final loss {result.losses[-1]:.4f})")
        else:
            cfg = LlmTrainConfig(adapter_rank=args.rank,
                                 learning_rate=args.learning_rate,
                                 global_batch_size=args.batch_size,
                                 epochs=args.epochs)
            result = train_llm(args.llm_ft, cfg, args.out_dir, seed=args.seed)
            print(f"wrote {result.adapter_path} "
                  f"({result.adapter_parameters} adapter params, "
                  f"{result.truncated_count} truncated items)")
    except (TrainDataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
