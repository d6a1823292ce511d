"""Learning-rate schedule: linear warmup, then a constant rate."""

from __future__ import annotations

import math


def warmup_steps(total_steps: int, warmup_fraction: float) -> int:
    if not 0.0 <= warmup_fraction < 1.0:
        raise ValueError("warmup_fraction must be in [0, 1)")
    return math.ceil(total_steps * warmup_fraction)


def warmup_constant_lr(base_lr: float, step: int, total_steps: int,
                       warmup_fraction: float) -> float:
    """lr at 1-based step t: base_lr * t / W while t <= W, base_lr after."""
    w = warmup_steps(total_steps, warmup_fraction)
    if step < 1:
        raise ValueError("step counts from 1")
    if w == 0 or step > w:
        return base_lr
    return base_lr * step / w
