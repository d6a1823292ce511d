"""Per-step metrics log shared by both trainers."""

from __future__ import annotations

import json
from pathlib import Path


class MetricsLog:
    """Appends {"step", "lr", "loss"} records to metrics.jsonl."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.records: list[dict] = []
        self.path.write_text("", encoding="utf-8")

    def log(self, step: int, lr: float, loss: float, **extra):
        record = {"step": step, "lr": lr, "loss": loss, **extra}
        self.records.append(record)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")


def read_metrics(path: str | Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
