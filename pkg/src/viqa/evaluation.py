"""Metrics and analyses: P@k, EM, token F1, end-to-end reports, k-sweeps,
answer-position and answer-length breakdowns.

EM and F1 compare normalized strings; the F1 tokenizer is injectable so a
word-segmented variant can be evaluated alongside the plain one. All
percentages are on a 0..100 scale.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import normalize_answer, tokenize
from .corpus import QARecord
from .retrieval import RetrievalHit

Tokenizer = Callable[[str], list[str]]


@dataclass
class RetrievalRun:
    """Ranked hits per question id, all lists capped at k_max."""

    hits: dict[str, list[RetrievalHit]]
    k_max: int


@dataclass
class EvalReport:
    overall: dict[str, float]
    per_type: dict[str, dict[str, float]]
    p_at_k: dict[int, float] = field(default_factory=dict)
    answer_position_hist: dict[int, float] = field(default_factory=dict)
    avg_answer_len_by_type: dict[str, float] = field(default_factory=dict)
    missing_predictions: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "per_type": self.per_type,
            "p_at_k": {str(k): v for k, v in self.p_at_k.items()},
            "answer_position_hist": {str(r): v for r, v in self.answer_position_hist.items()},
            "avg_answer_len_by_type": self.avg_answer_len_by_type,
            "missing_predictions": sorted(self.missing_predictions),
        }


def exact_match(pred: str, golds: Sequence[str]) -> int:
    """1 iff the normalized prediction equals any normalized gold answer."""
    if not golds:
        raise ValueError("no gold answers")
    norm_pred = normalize_answer(pred)
    return int(any(norm_pred == normalize_answer(g) for g in golds))


def token_f1(pred: str, golds: Sequence[str], tokenizer: Tokenizer | None = None) -> float:
    """Max over golds of token-multiset F1 = 2PR / (P + R).

    Both sides empty after normalization scores 1; exactly one empty
    scores 0. The tokenizer defaults to plain normalized whitespace tokens.
    """
    if not golds:
        raise ValueError("no gold answers")
    tok = tokenizer if tokenizer is not None else tokenize
    pred_tokens = tok(pred)
    best = 0.0
    for gold in golds:
        gold_tokens = tok(gold)
        if not pred_tokens or not gold_tokens:
            score = 1.0 if pred_tokens == gold_tokens else 0.0
        else:
            overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
            if overlap == 0:
                score = 0.0
            else:
                # 2PR/(P+R) reduced to one division for float cleanliness.
                score = 2.0 * overlap / (len(pred_tokens) + len(gold_tokens))
        best = max(best, score)
    return best


def precision_at_k(
    run: RetrievalRun,
    gold: Mapping[str, str],
    k: int,
    *,
    answer_texts: Mapping[str, Sequence[str]] | None = None,
    passage_texts: Mapping[str, str] | None = None,
) -> float:
    """Percentage of questions whose gold passage appears in the top k.

    Matching is by passage id. Passing answer_texts together with
    passage_texts switches to the containment fallback for corpora without
    gold ids: a question counts if any retrieved passage contains any gold
    answer string.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    containment = answer_texts is not None or passage_texts is not None
    if containment and (answer_texts is None or passage_texts is None):
        raise ValueError("containment mode needs both answer_texts and passage_texts")
    if not containment:
        missing = sorted(qid for qid in run.hits if qid not in gold)
        if missing:
            raise ValueError(f"questions missing a gold passage id: {', '.join(missing)}")
    if not run.hits:
        return 0.0
    found = 0
    for qid, hits in run.hits.items():
        top = hits[:k]
        if containment:
            golds = answer_texts.get(qid, ())
            if any(
                gold_text in passage_texts.get(h.passage_id, "")
                for h in top
                for gold_text in golds
            ):
                found += 1
        elif any(h.passage_id == gold[qid] for h in top):
            found += 1
    return 100.0 * found / len(run.hits)


def evaluate_e2e(
    predictions: Mapping[str, str],
    records: Sequence[QARecord],
    tokenizer: Tokenizer | None = None,
) -> EvalReport:
    """Overall and per-question-type EM/F1; missing predictions score zero."""
    if not records:
        raise ValueError("no records to evaluate")
    per_type: dict[str, dict[str, float]] = {}
    missing: list[str] = []
    for record in records:
        pred = predictions.get(record.id)
        if pred is None:
            missing.append(record.id)
            pred = ""
        em = exact_match(pred, record.answer_texts)
        f1 = token_f1(pred, record.answer_texts, tokenizer=tokenizer)
        bucket = per_type.setdefault(
            record.question_type, {"em_sum": 0.0, "f1_sum": 0.0, "count": 0}
        )
        bucket["em_sum"] += em
        bucket["f1_sum"] += f1
        bucket["count"] += 1
    total = len(records)
    overall = {
        "em": 100.0 * sum(b["em_sum"] for b in per_type.values()) / total,
        "f1": 100.0 * sum(b["f1_sum"] for b in per_type.values()) / total,
    }
    per_type_out = {
        qtype: {
            "em": 100.0 * b["em_sum"] / b["count"],
            "f1": 100.0 * b["f1_sum"] / b["count"],
            "count": b["count"],
        }
        for qtype, b in sorted(per_type.items())
    }
    return EvalReport(overall=overall, per_type=per_type_out, missing_predictions=missing)


def k_sweep(
    evaluate_at_k: Callable[[int], dict],
    ks: Sequence[int],
    out_csv: str | Path | None = None,
) -> list[dict]:
    """Metrics per k via the pipeline handle; partial rows are saved on failure.

    evaluate_at_k(k) must return a dict with at least "em" and "f1".
    """
    if not ks:
        raise ValueError("empty k list")
    if any(k < 1 for k in ks):
        raise ValueError("every k must be >= 1")
    rows: list[dict] = []
    try:
        for k in sorted(set(ks)):
            result = evaluate_at_k(k)
            rows.append({"k": k, "em": result["em"], "f1": result["f1"]})
    except Exception:
        if out_csv is not None and rows:
            write_sweep_csv(rows, out_csv)
        raise
    if out_csv is not None:
        write_sweep_csv(rows, out_csv)
    return rows


def answer_position_histogram(ranks: Iterable[int]) -> dict[int, float]:
    """Percentage of questions per source-passage rank; sums to 100."""
    counts = Counter(ranks)
    total = sum(counts.values())
    if total == 0:
        return {}
    return {rank: 100.0 * n / total for rank, n in sorted(counts.items())}


def avg_answer_length_by_type(
    predictions: Mapping[str, str],
    records: Sequence[QARecord],
    tokenizer: Tokenizer | None = None,
) -> dict[str, float]:
    """Mean predicted-answer token length per question type; missing counts 0."""
    tok = tokenizer if tokenizer is not None else tokenize
    sums: dict[str, list[float]] = {}
    for record in records:
        pred = predictions.get(record.id, "")
        sums.setdefault(record.question_type, []).append(float(len(tok(pred))))
    return {
        qtype: sum(lengths) / len(lengths) for qtype, lengths in sorted(sums.items())
    }


# ------------------------------------------------------------- report io


def write_report_json(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["question_type", "em", "f1", "count"])
        for qtype, bucket in report.per_type.items():
            writer.writerow([qtype, f"{bucket['em']:.4f}", f"{bucket['f1']:.4f}", bucket["count"]])
        writer.writerow(["ALL", f"{report.overall['em']:.4f}", f"{report.overall['f1']:.4f}",
                         sum(b["count"] for b in report.per_type.values())])


def write_sweep_csv(rows: Sequence[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["k", "em", "f1"])
        for row in rows:
            writer.writerow([row["k"], f"{row['em']:.4f}", f"{row['f1']:.4f}"])


def write_positions_csv(hist: Mapping[int, float], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(["rank", "pct"])
        for rank, pct in sorted(hist.items()):
            writer.writerow([rank, f"{pct:.4f}"])


def format_report_table(report: EvalReport) -> str:
    """Aligned plain-text table of per-type and overall EM/F1."""
    rows = [("type", "count", "EM", "F1")]
    for qtype, bucket in report.per_type.items():
        rows.append((qtype, str(bucket["count"]), f"{bucket['em']:.2f}", f"{bucket['f1']:.2f}"))
    total = sum(b["count"] for b in report.per_type.values())
    rows.append(("ALL", str(total), f"{report.overall['em']:.2f}", f"{report.overall['f1']:.2f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * widths[i] for i in range(4)))
    return "\n".join(lines)
