"""Answer selection: linear score fusion, deduplication, and alpha tuning."""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path

from .analysis import normalize_answer
from .evaluation import exact_match, token_f1
from .reader import SpanCandidate

DEDUP_POLICIES = ("max", "sum")

TUNE_METRICS = ("EM", "F1")


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.5
    dedup_policy: str = "max"

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.dedup_policy not in DEDUP_POLICIES:
            raise ValueError(f"dedup_policy must be one of {DEDUP_POLICIES}")


@dataclass(frozen=True)
class SelectedAnswer:
    answer: str
    score: float
    passage_id: str
    source_rank: int


def fuse(reader_score: float, retriever_score: float, alpha: float) -> float:
    """alpha * reader + (1 - alpha) * retriever, exactly."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if not (math.isfinite(reader_score) and math.isfinite(retriever_score)):
        raise ValueError("scores must be finite")
    return alpha * reader_score + (1.0 - alpha) * retriever_score


def select_answer(
    candidates: Sequence[SpanCandidate], config: FusionConfig = FusionConfig()
) -> SelectedAnswer:
    """Fuse scores, merge candidates with equal normalized answers, pick the best.

    The merged group's answer text and passage come from its highest-fused
    member. Global ties break to the higher retriever score, then ascending
    passage id. Output does not depend on candidate input order.
    """
    if not candidates:
        raise ValueError("no candidates")
    groups: dict[str, list[tuple[float, SpanCandidate]]] = {}
    for cand in candidates:
        fused = fuse(cand.reader_score, cand.retriever_score, config.alpha)
        groups.setdefault(normalize_answer(cand.answer_text), []).append((fused, cand))

    def member_order(item: tuple[float, SpanCandidate]):
        fused, cand = item
        return (-fused, -cand.retriever_score, cand.passage_id, cand.start_char, cand.answer_text)

    best: tuple[float, SpanCandidate] | None = None
    for members in groups.values():
        rep_fused, rep = min(members, key=member_order)
        group_score = (
            sum(f for f, _ in members) if config.dedup_policy == "sum" else rep_fused
        )
        if best is None or _group_order(group_score, rep) < _group_order(*best):
            best = (group_score, rep)
    score, rep = best
    return SelectedAnswer(
        answer=rep.answer_text,
        score=score,
        passage_id=rep.passage_id,
        source_rank=rep.retriever_rank,
    )


def _group_order(score: float, rep: SpanCandidate):
    return (-score, -rep.retriever_score, rep.passage_id, rep.start_char, rep.answer_text)


def alpha_grid(step: float) -> list[float]:
    """{0, step, 2*step, ...} up to and always including 1."""
    if not 0.0 < step <= 0.5:
        raise ValueError(f"grid step must be in (0, 0.5], got {step}")
    values = []
    i = 0
    while True:
        v = round(i * step, 10)
        if v >= 1.0:
            break
        values.append(v)
        i += 1
    values.append(1.0)
    return values


@dataclass
class AlphaTuneResult:
    alpha: float
    metric: str
    metric_value: float
    curve: list[dict]


def tune_alpha(
    dev_pairs: Sequence,
    candidate_fn: Callable[[object], list[SpanCandidate]],
    grid_step: float = 0.05,
    metric: str = "F1",
    dedup_policy: str = "max",
    tokenizer=None,
) -> AlphaTuneResult:
    """Grid-search alpha on question records with gold answers.

    candidate_fn maps a record to its span candidates; they are computed
    once and re-fused at every grid point, so the sweep costs only the
    selection and metric passes. Ties go to the smaller alpha.
    """
    if not dev_pairs:
        raise ValueError("empty tuning sample")
    metric = metric.upper()
    if metric not in TUNE_METRICS:
        raise ValueError(f"metric must be one of {TUNE_METRICS}")
    per_record = [(record, candidate_fn(record)) for record in dev_pairs]
    curve: list[dict] = []
    best: tuple[float, float] | None = None  # (metric_value, alpha)
    for alpha in alpha_grid(grid_step):
        config = FusionConfig(alpha=alpha, dedup_policy=dedup_policy)
        em_total = 0.0
        f1_total = 0.0
        for record, cands in per_record:
            pred = select_answer(cands, config).answer if cands else ""
            golds = record.answer_texts
            em_total += exact_match(pred, golds)
            f1_total += token_f1(pred, golds, tokenizer=tokenizer)
        em = 100.0 * em_total / len(per_record)
        f1 = 100.0 * f1_total / len(per_record)
        curve.append({"alpha": alpha, "em": em, "f1": f1})
        value = em if metric == "EM" else f1
        if best is None or value > best[0]:
            best = (value, alpha)
    return AlphaTuneResult(alpha=best[1], metric=metric, metric_value=best[0], curve=curve)


def write_alpha_tuning(path: str | Path, result: AlphaTuneResult, seed: int) -> None:
    payload = {
        "seed": seed,
        "grid": [point["alpha"] for point in result.curve],
        "curve": result.curve,
        "chosen_alpha": result.alpha,
        "metric": result.metric,
        "metric_value": result.metric_value,
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_tuned_alpha(path: str | Path) -> float | None:
    """chosen_alpha from a tuning file, or None if the file is absent."""
    p = Path(path)
    if not p.exists():
        return None
    payload = json.loads(p.read_text(encoding="utf-8"))
    return float(payload["chosen_alpha"])
