"""Hashed unigram+bigram TF-IDF retrieval with bag-of-words queries.

Terms are hashed into a power-of-two number of bins with a stable,
seedless 64-bit hash so that indexes built anywhere agree bit for bit.
A bin's weight in a document is log(1 + tf) times an Okapi-style idf,
log((N - df + 0.5) / (df + 0.5)), clamped at zero so terms occurring in
more than half the corpus never contribute negatively. Queries are
vectorized the same way and scored by sparse dot product.

Indexes are immutable once built; concurrent queries are safe.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import Analyzer, ngrams, segment_lines
from .errors import DataError
from .retrieval import RetrievalHit, take_top_k

DEFAULT_NUM_BINS = 1 << 24

FORMAT_NAME = "viqa-tfidf"
FORMAT_VERSION = 1


def term_bin(term: str, num_bins: int) -> int:
    """Stable 64-bit term hash reduced modulo the bin count."""
    digest = hashlib.md5(term.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % num_bins


def clamped_idf(n_docs: int, df: int) -> float:
    """log((N - df + 0.5) / (df + 0.5)), floored at zero."""
    return max(0.0, math.log((n_docs - df + 0.5) / (df + 0.5)))


def default_tfidf_analyzer() -> Analyzer:
    # Word segmentation stays off here: it consistently hurts this retriever.
    return Analyzer(segmenter="none", ngram_max=2)


@dataclass
class TfidfIndex:
    num_bins: int
    n_docs: int
    doc_freq: dict[int, int]
    doc_vectors: dict[str, dict[int, float]]
    analyzer: Analyzer
    _postings: dict[int, list[tuple[str, float]]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._postings:
            self._rebuild_postings()

    def _rebuild_postings(self) -> None:
        postings: dict[int, list[tuple[str, float]]] = defaultdict(list)
        for pid in sorted(self.doc_vectors):
            for bin_id, weight in self.doc_vectors[pid].items():
                postings[bin_id].append((pid, weight))
        self._postings = dict(postings)

    def query(self, question: str, k: int) -> list[RetrievalHit]:
        return tfidf_query(self, question, k)

    def term_idf(self, term: str) -> float:
        """Clamped idf of a single term, via its hash bin."""
        df = self.doc_freq.get(term_bin(term, self.num_bins), 0)
        return clamped_idf(self.n_docs, df)

    def save(self, path: str | Path) -> None:
        payload = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "num_bins": self.num_bins,
            "n_docs": self.n_docs,
            "analyzer": self.analyzer.to_dict(),
            "doc_freq": {str(b): df for b, df in self.doc_freq.items()},
            "doc_vectors": {
                pid: {str(b): w for b, w in vec.items()}
                for pid, vec in self.doc_vectors.items()
            },
        }
        Path(path).write_text(
            json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":")),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "TfidfIndex":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"no TF-IDF index at {path}; run `viqa index` first") from None
        if payload.get("format") != FORMAT_NAME:
            raise DataError(f"{path}: not a TF-IDF index file")
        if payload.get("version") != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported index version {payload.get('version')}")
        return cls(
            num_bins=int(payload["num_bins"]),
            n_docs=int(payload["n_docs"]),
            doc_freq={int(b): int(df) for b, df in payload["doc_freq"].items()},
            doc_vectors={
                pid: {int(b): float(w) for b, w in vec.items()}
                for pid, vec in payload["doc_vectors"].items()
            },
            analyzer=Analyzer.from_dict(payload["analyzer"]),
        )


def build_tfidf_index(
    passages,
    analyzer: Analyzer | None = None,
    num_bins: int = DEFAULT_NUM_BINS,
) -> TfidfIndex:
    """Index passages (objects with .id and .text) for dot-product retrieval."""
    passages = list(passages)
    if not passages:
        raise ValueError("cannot build a TF-IDF index from an empty passage list")
    if num_bins < 1 or num_bins & (num_bins - 1):
        raise ValueError(f"num_bins must be a power of two, got {num_bins}")
    analyzer = analyzer if analyzer is not None else default_tfidf_analyzer()

    words_per_doc = segment_lines([p.text for p in passages], analyzer)
    bin_counts: dict[str, Counter] = {}
    doc_freq: Counter = Counter()
    for passage, words in zip(passages, words_per_doc):
        counts = Counter(
            term_bin(term, num_bins) for term in ngrams(words, analyzer.ngram_max)
        )
        bin_counts[passage.id] = counts
        doc_freq.update(counts.keys())

    n_docs = len(passages)
    doc_vectors: dict[str, dict[int, float]] = {}
    for pid, counts in bin_counts.items():
        vec = {}
        for bin_id, tf in counts.items():
            weight = math.log1p(tf) * clamped_idf(n_docs, doc_freq[bin_id])
            if weight > 0.0:
                vec[bin_id] = weight
        doc_vectors[pid] = vec
    return TfidfIndex(
        num_bins=num_bins,
        n_docs=n_docs,
        doc_freq=dict(doc_freq),
        doc_vectors=doc_vectors,
        analyzer=analyzer,
    )


def query_vector(index: TfidfIndex, question: str) -> dict[int, float]:
    """Question vectorized with the index's analyzer and weighting."""
    counts = Counter(
        term_bin(term, index.num_bins) for term in index.analyzer.terms(question)
    )
    vec = {}
    for bin_id, tf in counts.items():
        df = index.doc_freq.get(bin_id)
        if not df:
            continue
        weight = math.log1p(tf) * clamped_idf(index.n_docs, df)
        if weight > 0.0:
            vec[bin_id] = weight
    return vec


def tfidf_query(index: TfidfIndex, question: str, k: int) -> list[RetrievalHit]:
    """Top-k passages by sparse dot product against the bag-of-words question."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q_vec = query_vector(index, question)
    scores: dict[str, float] = defaultdict(float)
    for bin_id, q_weight in q_vec.items():
        for pid, d_weight in index._postings.get(bin_id, ()):
            scores[pid] += q_weight * d_weight
    return take_top_k(scores, k)
