"""End-to-end wiring: retrieve top-k passages, read candidate spans, fuse
scores, and select the final answer; plus the evaluation entry points that
the CLI and the tuner drive.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace

from .analysis import tokenize
from .corpus import DocumentStore, QARecord
from .errors import RemoteReaderError
from .evaluation import (
    EvalReport,
    RetrievalRun,
    answer_position_histogram,
    avg_answer_length_by_type,
    evaluate_e2e,
    k_sweep,
    precision_at_k,
)
from .reader import ReaderConfig, SpanCandidate, baseline_lexical_read, remote_read
from .retrieval import RetrievalHit, normalize_scores
from .selector import FusionConfig, SelectedAnswer, select_answer

logger = logging.getLogger(__name__)


@dataclass
class AnswerTrace:
    question_id: str
    hits: list[RetrievalHit]
    selected: SelectedAnswer | None


class QAPipeline:
    """Retriever-reader-selector pipeline over a document store.

    The retriever index must expose query(question, k) and term_idf(term);
    both index types in this package do. With reader="remote" every
    retrieved passage is read over the wire protocol; per-passage failures
    are skipped with a warning.
    """

    def __init__(
        self,
        store: DocumentStore,
        index,
        *,
        reader: str = "baseline",
        endpoint: str | None = None,
        reader_config: ReaderConfig = ReaderConfig(),
        fusion: FusionConfig = FusionConfig(),
        k: int = 5,
        normalize_retriever: bool = True,
        max_parallel: int = 4,
        timeout: float = 10.0,
    ):
        if reader not in ("baseline", "remote"):
            raise ValueError(f"reader must be 'baseline' or 'remote', got {reader!r}")
        if reader == "remote" and not endpoint:
            raise ValueError("remote reader requires an endpoint")
        self.store = store
        self.index = index
        self.reader = reader
        self.endpoint = endpoint
        self.reader_config = reader_config
        self.fusion = fusion
        self.k = k
        self.normalize_retriever = normalize_retriever
        self.max_parallel = max_parallel
        self.timeout = timeout
        self._passage_by_id = {p.id: p for p in store.passages()}

    # ----------------------------------------------------------- answering

    def retrieve(self, question: str, k: int | None = None) -> list[RetrievalHit]:
        return self.index.query(question, k or self.k)

    def _read_hits(self, question: str, hits: list[RetrievalHit]) -> list[SpanCandidate | None]:
        """Raw reader candidates aligned with hits; None marks a failed read."""
        passages = [self._passage_by_id[h.passage_id] for h in hits]
        if self.reader == "baseline":
            return [
                baseline_lexical_read(
                    question, p, self.reader_config, idf=self.index.term_idf
                )
                for p in passages
            ]
        results = remote_read(
            question,
            passages,
            self.endpoint,
            timeout=self.timeout,
            max_parallel=self.max_parallel,
        )
        if all(not r.ok for r in results):
            raise RemoteReaderError(
                f"remote reader failed for every passage: {results[0].error}"
            )
        for r in results:
            if not r.ok:
                logger.warning("remote read failed for passage %s: %s", r.passage_id, r.error)
        return [r.candidate for r in results]

    def _score_candidates(
        self, hits: list[RetrievalHit], raw: Sequence[SpanCandidate | None]
    ) -> list[SpanCandidate]:
        scored_hits = normalize_scores(hits) if self.normalize_retriever else hits
        out = []
        for hit, cand in zip(scored_hits, raw):
            if cand is None:
                continue
            out.append(
                replace(cand, retriever_score=hit.score, retriever_rank=hit.rank)
            )
        return out

    def candidates(self, question: str, k: int | None = None) -> list[SpanCandidate]:
        hits = self.retrieve(question, k)
        if not hits:
            return []
        return self._score_candidates(hits, self._read_hits(question, hits))

    def answer(
        self, question: str, k: int | None = None, alpha: float | None = None
    ) -> SelectedAnswer | None:
        """Final answer for one question, or None when nothing is retrieved."""
        cands = self.candidates(question, k)
        if not cands:
            return None
        config = self.fusion if alpha is None else replace(self.fusion, alpha=alpha)
        return select_answer(cands, config)

    # ---------------------------------------------------------- evaluation

    def evaluate_split(
        self,
        records: Sequence[QARecord],
        k: int | None = None,
        alpha: float | None = None,
        tokenizer=None,
    ) -> tuple[EvalReport, dict[str, str]]:
        """Full report over records: EM/F1, P@1..k, positions, answer lengths."""
        if not records:
            raise ValueError("no records to evaluate")
        k = k or self.k
        config = self.fusion if alpha is None else replace(self.fusion, alpha=alpha)
        predictions: dict[str, str] = {}
        run_hits: dict[str, list[RetrievalHit]] = {}
        ranks: list[int] = []
        for record in records:
            hits = self.retrieve(record.question, k)
            run_hits[record.id] = hits
            selected = None
            if hits:
                cands = self._score_candidates(hits, self._read_hits(record.question, hits))
                if cands:
                    selected = select_answer(cands, config)
            predictions[record.id] = selected.answer if selected else ""
            if selected:
                ranks.append(selected.source_rank)
        report = evaluate_e2e(predictions, records, tokenizer=tokenizer)
        run = RetrievalRun(run_hits, k)
        gold = {r.id: r.gold_passage_id for r in records}
        report.p_at_k = {kk: precision_at_k(run, gold, kk) for kk in range(1, k + 1)}
        report.answer_position_hist = answer_position_histogram(ranks)
        report.avg_answer_len_by_type = avg_answer_length_by_type(
            predictions, records, tokenizer=tokenizer
        )
        return report, predictions

    def sweep_handle(
        self,
        records: Sequence[QARecord],
        k_max: int,
        alpha: float | None = None,
        tokenizer=None,
    ):
        """evaluate_at_k(k) closure over retrieval and reads cached at k_max.

        For each smaller k the cached top-k subset is re-normalized and
        re-fused, which matches what a fresh run at that k would compute.
        """
        if not records:
            raise ValueError("no records to evaluate")
        config = self.fusion if alpha is None else replace(self.fusion, alpha=alpha)
        cached: list[tuple[QARecord, list[RetrievalHit], list[SpanCandidate | None]]] = []
        for record in records:
            hits = self.retrieve(record.question, k_max)
            raw = self._read_hits(record.question, hits) if hits else []
            cached.append((record, hits, raw))

        def evaluate_at_k(k: int) -> dict:
            predictions: dict[str, str] = {}
            for record, hits, raw in cached:
                subset_hits = hits[:k]
                selected = None
                if subset_hits:
                    cands = self._score_candidates(subset_hits, raw[: len(subset_hits)])
                    if cands:
                        selected = select_answer(cands, config)
                predictions[record.id] = selected.answer if selected else ""
            report = evaluate_e2e(predictions, records, tokenizer=tokenizer)
            return {"em": report.overall["em"], "f1": report.overall["f1"]}

        return evaluate_at_k

    def sweep(
        self,
        records: Sequence[QARecord],
        ks: Sequence[int],
        alpha: float | None = None,
        tokenizer=None,
        out_csv=None,
    ) -> list[dict]:
        """EM/F1 per k, retrieving and reading once at max(ks)."""
        if not ks or any(k < 1 for k in ks):
            raise ValueError("every k must be >= 1")
        handle = self.sweep_handle(records, max(ks), alpha, tokenizer)
        return k_sweep(handle, ks, out_csv=out_csv)

    def candidate_fn(self, k: int | None = None):
        """Record-to-candidates callable for the alpha tuner."""

        def fn(record: QARecord) -> list[SpanCandidate]:
            return self.candidates(record.question, k)

        return fn
