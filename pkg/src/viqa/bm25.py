"""Inverted-index BM25 retrieval with word segmentation on by default.

score(d) = sum over query terms t of
    idf(t) * tf(t,d) * (k1 + 1) / (tf(t,d) + k1 * (1 - b + b * |d| / avgdl))
with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)). Query terms keep their
multiplicity, so a repeated question word contributes once per occurrence.
Defaults k1=0.9 and b=0.4 follow the common Anserini configuration.

Indexes are immutable once built; concurrent queries are safe.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

from .analysis import Analyzer, ngrams, segment_lines
from .errors import DataError
from .retrieval import RetrievalHit, normalize_scores, take_top_k

__all__ = [
    "InvertedIndex",
    "build_bm25_index",
    "bm25_query",
    "bm25_idf",
    "normalize_scores",
    "default_bm25_analyzer",
]

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4

FORMAT_NAME = "viqa-bm25"
FORMAT_VERSION = 1


def bm25_idf(n_docs: int, df: int) -> float:
    """ln(1 + (N - df + 0.5) / (df + 0.5)); strictly positive for df <= N."""
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


def default_bm25_analyzer() -> Analyzer:
    # Segmentation on by default; with no compound lexicon configured the
    # builtin segmenter degenerates to plain tokens.
    return Analyzer(segmenter="builtin_dictionary", ngram_max=1)


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_len: dict[str, int]
    avg_doc_len: float
    n_docs: int
    analyzer: Analyzer
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B

    def query(self, question: str, k: int) -> list[RetrievalHit]:
        return bm25_query(self, question, k)

    def term_idf(self, term: str) -> float:
        return bm25_idf(self.n_docs, len(self.postings.get(term, ())))

    def save(self, path: str | Path) -> None:
        payload = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "k1": self.k1,
            "b": self.b,
            "n_docs": self.n_docs,
            "avg_doc_len": self.avg_doc_len,
            "analyzer": self.analyzer.to_dict(),
            "doc_len": self.doc_len,
            "postings": {t: [[pid, tf] for pid, tf in plist] for t, plist in self.postings.items()},
        }
        Path(path).write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":")),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"no BM25 index at {path}; run `viqa index` first") from None
        if payload.get("format") != FORMAT_NAME:
            raise DataError(f"{path}: not a BM25 index file")
        if payload.get("version") != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported index version {payload.get('version')}")
        return cls(
            postings={
                t: [(pid, int(tf)) for pid, tf in plist]
                for t, plist in payload["postings"].items()
            },
            doc_len={pid: int(n) for pid, n in payload["doc_len"].items()},
            avg_doc_len=float(payload["avg_doc_len"]),
            n_docs=int(payload["n_docs"]),
            analyzer=Analyzer.from_dict(payload["analyzer"]),
            k1=float(payload["k1"]),
            b=float(payload["b"]),
        )


def build_bm25_index(
    passages,
    analyzer: Analyzer | None = None,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> InvertedIndex:
    """Build postings and length statistics over passages (.id and .text)."""
    passages = list(passages)
    if not passages:
        raise ValueError("cannot build a BM25 index from an empty passage list")
    if k1 <= 0:
        raise ValueError(f"k1 must be positive, got {k1}")
    if not 0.0 <= b <= 1.0:
        raise ValueError(f"b must be in [0, 1], got {b}")
    analyzer = analyzer if analyzer is not None else default_bm25_analyzer()

    words_per_doc = segment_lines([p.text for p in passages], analyzer)
    postings: dict[str, list[tuple[str, int]]] = defaultdict(list)
    doc_len: dict[str, int] = {}
    for passage, words in zip(passages, words_per_doc):
        terms = ngrams(words, analyzer.ngram_max)
        doc_len[passage.id] = len(terms)
        for term, tf in Counter(terms).items():
            postings[term].append((passage.id, tf))
    for plist in postings.values():
        plist.sort(key=lambda entry: entry[0])
    n_docs = len(passages)
    return InvertedIndex(
        postings={t: postings[t] for t in sorted(postings)},
        doc_len=doc_len,
        avg_doc_len=sum(doc_len.values()) / n_docs,
        n_docs=n_docs,
        analyzer=analyzer,
        k1=k1,
        b=b,
    )


def bm25_query(index: InvertedIndex, question: str, k: int) -> list[RetrievalHit]:
    """Top-k BM25 scores for the question; absent terms contribute nothing."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores: dict[str, float] = defaultdict(float)
    for term in index.analyzer.terms(question):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = bm25_idf(index.n_docs, len(plist))
        for pid, tf in plist:
            norm = index.k1 * (1.0 - index.b + index.b * index.doc_len[pid] / index.avg_doc_len)
            scores[pid] += idf * tf * (index.k1 + 1.0) / (tf + norm)
    return take_top_k(scores, k)
