"""Sanity gate: compare fine-tuned vs base encoder hit@1 on held-out pairs."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

log = logging.getLogger(__name__)


@dataclass
class SmokeResult:
    hit_at_1_fine_tuned: float
    hit_at_1_base: float
    flagged: bool


def hit_at_1(encoder: nn.Module, pairs: list[tuple[str, str]]) -> float:
    """Fraction of queries whose own context tops the cosine ranking."""
    if not pairs:
        raise ValueError("held-out split is empty")
    with torch.no_grad():
        q = F.normalize(encoder([query for query, _ in pairs]), dim=1)
        c = F.normalize(encoder([ctx for _, ctx in pairs]), dim=1)
        best = (q @ c.T).argmax(dim=1)
    hits = (best == torch.arange(len(pairs))).sum().item()
    return hits / len(pairs)


def smoke_eval(fine_tuned: nn.Module, base: nn.Module,
               pairs: list[tuple[str, str]]) -> SmokeResult:
    ft_score = hit_at_1(fine_tuned, pairs)
    base_score = hit_at_1(base, pairs)
    flagged = ft_score < base_score
    if flagged:
        log.warning("fine-tuned hit@1 %.3f below base %.3f; artifact flagged",
                    ft_score, base_score)
    return SmokeResult(hit_at_1_fine_tuned=ft_score, hit_at_1_base=base_score,
                       flagged=flagged)
