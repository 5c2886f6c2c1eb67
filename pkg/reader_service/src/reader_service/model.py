"""Span extraction over a Hugging Face extractive-QA checkpoint.

Scores are probabilities: start/end logits are softmaxed over the passage
tokens of each window, and a span's score is pstart * pend. Passages
longer than the sequence budget run through overlapping windows and the
best-scoring window wins. Character offsets always index the original
passage text, so the returned answer is the exact substring.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import torch
from transformers import AutoModelForQuestionAnswering, AutoTokenizer

logger = logging.getLogger(__name__)

DEVICES = ("cpu", "gpu")


@dataclass(frozen=True)
class ServiceConfig:
    model: str
    device: str = "cpu"
    max_sequence_length: int = 384
    batch_size: int = 8
    window_stride: int = 128
    max_answer_tokens: int = 30

    def __post_init__(self) -> None:
        if self.max_sequence_length < 32:
            raise ValueError(
                f"max_sequence_length must be >= 32, got {self.max_sequence_length}"
            )
        if self.device not in DEVICES:
            raise ValueError(f"device must be one of {DEVICES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "device": self.device,
            "max_sequence_length": self.max_sequence_length,
            "batch_size": self.batch_size,
            "window_stride": self.window_stride,
            "max_answer_tokens": self.max_answer_tokens,
        }


@dataclass(frozen=True)
class Span:
    start_char: int
    end_char: int
    score: float


class SpanModel:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model, use_fast=True)
        if not self.tokenizer.is_fast:
            raise RuntimeError("a fast tokenizer with offset mapping is required")
        self.model = AutoModelForQuestionAnswering.from_pretrained(config.model)
        if config.device == "gpu":
            if torch.cuda.is_available():
                self.device = torch.device("cuda")
            else:
                logger.warning("gpu requested but CUDA is unavailable; using cpu")
                self.device = torch.device("cpu")
        else:
            self.device = torch.device("cpu")
        self.model.to(self.device).eval()

    def _fit_question(self, question: str, budget: int) -> str:
        """Truncate the question to the token budget; answers never come
        from it, so a lossy decode is acceptable."""
        for _ in range(5):
            ids = self.tokenizer(question, add_special_tokens=False)["input_ids"]
            if len(ids) <= budget:
                return question
            question = self.tokenizer.decode(ids[:budget], skip_special_tokens=False)
            logger.warning("question truncated to %d tokens", budget)
        return self.tokenizer.decode(ids[: max(1, budget // 2)])

    def _encode(self, question: str, text: str):
        specials = self.tokenizer.num_special_tokens_to_add(pair=True)
        # Reserve at least half the sequence budget for passage tokens.
        question = self._fit_question(
            question, max(1, (self.config.max_sequence_length - specials) // 2)
        )
        q_len = len(self.tokenizer(question, add_special_tokens=False)["input_ids"])
        capacity = self.config.max_sequence_length - q_len - specials
        # Overlap between consecutive windows; never more than half the
        # passage capacity, or windows would advance by almost nothing.
        stride = min(self.config.window_stride, capacity // 2)
        return self.tokenizer(
            question,
            text,
            truncation="only_second",
            max_length=self.config.max_sequence_length,
            stride=max(0, stride),
            return_overflowing_tokens=True,
            return_offsets_mapping=True,
            padding=True,
            return_tensors="pt",
        )

    def read_batch(self, question: str, texts: list[str]) -> list[Span]:
        """Best span per passage text; windows of all passages share batches."""
        encodings = [self._encode(question, text) for text in texts]
        window_owner: list[int] = []
        for idx, enc in enumerate(encodings):
            window_owner.extend([idx] * enc["input_ids"].shape[0])

        all_starts: list[torch.Tensor] = []
        all_ends: list[torch.Tensor] = []
        flat_rows = []
        for enc in encodings:
            n = enc["input_ids"].shape[0]
            for w in range(n):
                row = {
                    "input_ids": enc["input_ids"][w],
                    "attention_mask": enc["attention_mask"][w],
                }
                if "token_type_ids" in enc:
                    row["token_type_ids"] = enc["token_type_ids"][w]
                flat_rows.append(row)
        max_len = max(row["input_ids"].shape[0] for row in flat_rows)
        pad_id = self.tokenizer.pad_token_id or 0

        with torch.no_grad():
            for lo in range(0, len(flat_rows), self.config.batch_size):
                chunk = flat_rows[lo : lo + self.config.batch_size]
                batch = {}
                for key in chunk[0]:
                    fill = pad_id if key == "input_ids" else 0
                    batch[key] = torch.stack(
                        [
                            torch.nn.functional.pad(
                                row[key], (0, max_len - row[key].shape[0]), value=fill
                            )
                            for row in chunk
                        ]
                    ).to(self.device)
                out = self.model(**batch)
                all_starts.append(out.start_logits.cpu())
                all_ends.append(out.end_logits.cpu())
        start_logits = torch.cat(all_starts)
        end_logits = torch.cat(all_ends)

        spans: list[Span] = []
        window_cursor = 0
        for idx, (enc, text) in enumerate(zip(encodings, texts)):
            n_windows = enc["input_ids"].shape[0]
            best: Span | None = None
            for w in range(n_windows):
                row = window_cursor + w
                candidate = self._best_window_span(
                    enc, w, start_logits[row], end_logits[row]
                )
                if candidate and (best is None or candidate.score > best.score):
                    best = candidate
            window_cursor += n_windows
            spans.append(best if best is not None else _fallback_span(text))
        return spans

    def best_span(self, question: str, text: str) -> Span:
        return self.read_batch(question, [text])[0]

    def _best_window_span(self, enc, w: int, start_logits, end_logits) -> Span | None:
        sequence_ids = enc.sequence_ids(w)
        offsets = enc["offset_mapping"][w].tolist()
        attention = enc["attention_mask"][w].tolist()
        valid = [
            i
            for i, sid in enumerate(sequence_ids)
            if sid == 1 and attention[i] and offsets[i][0] < offsets[i][1]
        ]
        if not valid:
            return None
        p_start = _masked_softmax(start_logits, valid)
        p_end = _masked_softmax(end_logits, valid)
        cap = self.config.max_answer_tokens
        best = None
        for a, i in enumerate(valid):
            for j in valid[a : a + cap]:
                if offsets[i][0] >= offsets[j][1]:
                    continue
                score = p_start[i] * p_end[j]
                if best is None or score > best[2]:
                    best = (i, j, score)
        if best is None:
            return None
        i, j, score = best
        return Span(offsets[i][0], offsets[j][1], float(score))


def _masked_softmax(logits: torch.Tensor, positions: list[int]) -> dict[int, float]:
    selected = logits[positions]
    probs = torch.softmax(selected, dim=0)
    return {pos: float(p) for pos, p in zip(positions, probs)}


def _fallback_span(text: str) -> Span:
    # No scoreable passage token (for example whitespace-only text): answer
    # the trimmed extent so offset and substring invariants still hold.
    start = len(text) - len(text.lstrip())
    end = len(text.rstrip())
    if start >= end:
        start, end = 0, len(text)
    return Span(start, end, 0.0)
