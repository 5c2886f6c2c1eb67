"""Shared retrieval types: scored hits, top-k selection, score normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class RetrievalHit:
    passage_id: str
    score: float
    rank: int


def take_top_k(scores: dict[str, float], k: int) -> list[RetrievalHit]:
    """Top-k positive-scoring passages, ties broken by ascending passage id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranked = sorted(
        ((pid, s) for pid, s in scores.items() if s > 0.0),
        key=lambda item: (-item[1], item[0]),
    )[:k]
    return [RetrievalHit(pid, s, rank) for rank, (pid, s) in enumerate(ranked, start=1)]


def normalize_scores(hits: list[RetrievalHit]) -> list[RetrievalHit]:
    """Softmax over the retrieved list's raw scores; order and ranks unchanged."""
    if not hits:
        raise ValueError("no hits to normalize")
    peak = max(h.score for h in hits)
    exps = [math.exp(h.score - peak) for h in hits]
    total = sum(exps)
    return [
        RetrievalHit(h.passage_id, e / total, h.rank) for h, e in zip(hits, exps)
    ]
