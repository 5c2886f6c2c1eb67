"""Retriever-reader-selector extractive QA over Vietnamese passage collections."""

__version__ = "0.1.0"

from .analysis import Analyzer, load_compounds, ngrams, normalize_answer, segment_words, tokenize
from .bm25 import InvertedIndex, bm25_query, build_bm25_index
from .corpus import (
    CorpusStats,
    DocumentStore,
    Passage,
    QARecord,
    QuestionTypeLexicon,
    classify_question,
)
from .evaluation import (
    EvalReport,
    RetrievalRun,
    answer_position_histogram,
    avg_answer_length_by_type,
    evaluate_e2e,
    exact_match,
    k_sweep,
    precision_at_k,
    token_f1,
)
from .pipeline import QAPipeline
from .reader import (
    ReaderConfig,
    ReadResult,
    SpanCandidate,
    TokenScores,
    baseline_lexical_read,
    remote_read,
    select_span,
    validate_read_response,
)
from .retrieval import RetrievalHit, normalize_scores
from .selector import FusionConfig, SelectedAnswer, fuse, select_answer, tune_alpha
from .tfidf import TfidfIndex, build_tfidf_index, tfidf_query

__all__ = [
    "Analyzer",
    "CorpusStats",
    "DocumentStore",
    "EvalReport",
    "FusionConfig",
    "InvertedIndex",
    "Passage",
    "QAPipeline",
    "QARecord",
    "QuestionTypeLexicon",
    "ReadResult",
    "ReaderConfig",
    "RetrievalHit",
    "RetrievalRun",
    "SelectedAnswer",
    "SpanCandidate",
    "TfidfIndex",
    "TokenScores",
    "answer_position_histogram",
    "avg_answer_length_by_type",
    "baseline_lexical_read",
    "bm25_query",
    "build_bm25_index",
    "build_tfidf_index",
    "classify_question",
    "evaluate_e2e",
    "exact_match",
    "fuse",
    "k_sweep",
    "load_compounds",
    "ngrams",
    "normalize_answer",
    "normalize_scores",
    "precision_at_k",
    "remote_read",
    "segment_words",
    "select_answer",
    "select_span",
    "tfidf_query",
    "token_f1",
    "tokenize",
    "tune_alpha",
    "validate_read_response",
    "__version__",
]
