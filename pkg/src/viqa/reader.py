"""Span-extraction readers: best-span selection, a dependency-free lexical
baseline, and the HTTP client for a remote transformer reader.

Every reader produces per-token start/end scores and picks the span
maximizing their combination subject to a length cap; candidates always
satisfy substring consistency with the source passage.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from .analysis import normalize_answer, tokenize
from .errors import ProtocolError, RemoteReaderError

logger = logging.getLogger(__name__)

SCORE_SPACES = ("probability", "log")

# Window radius for spreading lexical-overlap mass to nearby tokens.
BASELINE_WINDOW = 3


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


@dataclass
class TokenScores:
    tokens: list[Token]
    pstart: list[float]
    pend: list[float]


@dataclass(frozen=True)
class ReaderConfig:
    max_answer_tokens: int = 30
    score_space: str = "probability"

    def __post_init__(self) -> None:
        if self.max_answer_tokens < 1:
            raise ValueError(f"max_answer_tokens must be >= 1, got {self.max_answer_tokens}")
        if self.score_space not in SCORE_SPACES:
            raise ValueError(f"score_space must be one of {SCORE_SPACES}")


@dataclass
class SpanCandidate:
    passage_id: str
    answer_text: str
    start_char: int
    end_char: int
    reader_score: float
    retriever_score: float = 0.0
    retriever_rank: int = 0


@dataclass
class ReadResult:
    """Per-passage outcome of a remote read; failures are marked, not dropped."""

    passage_id: str
    candidate: SpanCandidate | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.candidate is not None


def whitespace_tokens(text: str) -> list[Token]:
    """Raw whitespace tokens with character offsets into the original text."""
    return [Token(m.group(), m.start(), m.end()) for m in re.finditer(r"\S+", text)]


def select_span(scores: TokenScores, config: ReaderConfig = ReaderConfig()) -> tuple[int, int, float]:
    """Best (start, end, score) with start <= end < start + max_answer_tokens.

    Probability space maximizes pstart[i] * pend[j]; log space maximizes
    pstart[i] + pend[j]. Ties break to the smaller start, then smaller end.
    """
    n = len(scores.tokens)
    if n == 0:
        raise ValueError("empty token list")
    if len(scores.pstart) != n or len(scores.pend) != n:
        raise ValueError("pstart/pend lengths do not match tokens")
    log_space = config.score_space == "log"
    best: tuple[int, int, float] | None = None
    for i in range(n):
        ps = scores.pstart[i]
        for j in range(i, min(n, i + config.max_answer_tokens)):
            value = ps + scores.pend[j] if log_space else ps * scores.pend[j]
            if log_space:
                valid = value > float("-inf")
            else:
                valid = value > 0.0
            if valid and (best is None or value > best[2]):
                best = (i, j, value)
    if best is None:
        raise ValueError("no valid span")
    return best


def baseline_token_scores(question: str, passage, idf=None) -> TokenScores:
    """Per-token distributions for the lexical baseline.

    Each passage token gets the summed idf of question terms equal to it;
    that mass is spread over a +/-3 token window and softmaxed into one
    distribution used for both start and end scores.
    """
    if not question.strip():
        raise ValueError("empty question")
    tokens = whitespace_tokens(passage.text)
    if not tokens:
        raise ValueError(f"passage {passage.id} has no tokens")
    idf_fn = idf if idf is not None else (lambda term: 1.0)
    weight_by_term: dict[str, float] = {}
    for term in tokenize(question):
        weight_by_term[term] = weight_by_term.get(term, 0.0) + idf_fn(term)
    overlap = [weight_by_term.get(normalize_answer(tok.text), 0.0) for tok in tokens]
    n = len(tokens)
    window = [
        sum(overlap[max(0, i - BASELINE_WINDOW) : min(n, i + BASELINE_WINDOW + 1)])
        for i in range(n)
    ]
    probs = _softmax(window)
    return TokenScores(tokens=tokens, pstart=probs, pend=list(probs))


def baseline_lexical_read(
    question: str,
    passage,
    config: ReaderConfig = ReaderConfig(),
    idf=None,
) -> SpanCandidate:
    """Deterministic reader over idf-weighted lexical overlap.

    Not a trained model, just enough signal to exercise the full
    span-selection and fusion path end to end.
    """
    scores = baseline_token_scores(question, passage, idf=idf)
    # The baseline's scores are probabilities, so spans are selected in
    # probability space regardless of the configured default.
    i, j, _ = select_span(scores, ReaderConfig(config.max_answer_tokens, "probability"))
    tokens = scores.tokens
    start_char, end_char = tokens[i].start, tokens[j].end
    return SpanCandidate(
        passage_id=passage.id,
        answer_text=passage.text[start_char:end_char],
        start_char=start_char,
        end_char=end_char,
        reader_score=scores.pstart[i] * scores.pend[j],
    )


def _softmax(values: list[float]) -> list[float]:
    peak = max(values)
    exps = [math.exp(v - peak) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


# ----------------------------------------------------------- remote client


def validate_read_response(payload, passages) -> list[SpanCandidate]:
    """Validate a reader wire-protocol response against the sent passages.

    Checks field presence and types, offset sanity, substring consistency,
    and order alignment; scores outside [0, 1] are clamped with a warning.
    Raises ProtocolError naming the offending field otherwise.
    """
    if not isinstance(payload, dict):
        raise ProtocolError("response body is not a JSON object")
    candidates = payload.get("candidates")
    if not isinstance(candidates, list):
        raise ProtocolError("missing or non-list field 'candidates'")
    if len(candidates) != len(passages):
        raise ProtocolError(
            f"'candidates' has {len(candidates)} entries for {len(passages)} passages"
        )
    out: list[SpanCandidate] = []
    for cand, passage in zip(candidates, passages):
        if not isinstance(cand, dict):
            raise ProtocolError("candidate entry is not an object")
        pid = cand.get("passage_id")
        if pid != passage.id:
            raise ProtocolError(f"field 'passage_id': expected {passage.id!r}, got {pid!r}")
        answer = cand.get("answer")
        if not isinstance(answer, str):
            raise ProtocolError("field 'answer': missing or not a string")
        start = cand.get("start_char")
        end = cand.get("end_char")
        if not isinstance(start, int) or isinstance(start, bool):
            raise ProtocolError("field 'start_char': missing or not an integer")
        if not isinstance(end, int) or isinstance(end, bool):
            raise ProtocolError("field 'end_char': missing or not an integer")
        if not (0 <= start < end <= len(passage.text)):
            raise ProtocolError(
                f"field 'start_char'/'end_char': invalid span [{start}, {end}) "
                f"for passage of length {len(passage.text)}"
            )
        if passage.text[start:end] != answer:
            raise ProtocolError(
                "field 'answer': does not equal the passage substring at "
                f"[{start}, {end})"
            )
        score = cand.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool) or not math.isfinite(score):
            raise ProtocolError("field 'score': missing or not a finite number")
        clamped = min(1.0, max(0.0, float(score)))
        if clamped != score:
            logger.warning(
                "remote reader score %.6g for passage %s clamped to [0, 1]", score, pid
            )
        out.append(
            SpanCandidate(
                passage_id=passage.id,
                answer_text=answer,
                start_char=start,
                end_char=end,
                reader_score=clamped,
            )
        )
    return out


def remote_read(
    question: str,
    passages,
    endpoint: str,
    timeout: float = 10.0,
    max_parallel: int = 4,
) -> list[ReadResult]:
    """Read all passages through a remote reader, preserving input order.

    Issues one request per passage with at most max_parallel in flight.
    Network failures mark the affected passage's entry; malformed responses
    raise ProtocolError since they indicate a broken server.
    """
    passages = list(passages)
    if not passages:
        raise ValueError("no passages to read")
    if max_parallel < 1:
        raise ValueError(f"max_parallel must be >= 1, got {max_parallel}")
    url = endpoint.rstrip("/") + "/read"

    def call(passage) -> ReadResult:
        body = {
            "question": question,
            "passages": [{"id": passage.id, "text": passage.text}],
        }
        try:
            resp = requests.post(url, json=body, timeout=timeout)
        except requests.RequestException as exc:
            return ReadResult(passage.id, error=f"request failed: {exc}")
        if resp.status_code != 200:
            return ReadResult(
                passage.id, error=f"reader returned HTTP {resp.status_code}"
            )
        try:
            payload = resp.json()
        except ValueError:
            raise ProtocolError("response body is not valid JSON") from None
        candidate = validate_read_response(payload, [passage])[0]
        return ReadResult(passage.id, candidate=candidate)

    with ThreadPoolExecutor(max_workers=min(max_parallel, len(passages))) as pool:
        futures = [pool.submit(call, p) for p in passages]
        return [f.result() for f in futures]


def check_reader_health(endpoint: str, timeout: float = 10.0) -> dict:
    """GET /health; raises RemoteReaderError if unreachable or not ok."""
    url = endpoint.rstrip("/") + "/health"
    try:
        resp = requests.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise RemoteReaderError(f"reader endpoint {endpoint} unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise RemoteReaderError(f"reader health check returned HTTP {resp.status_code}")
    payload = resp.json()
    if payload.get("status") != "ok":
        raise RemoteReaderError(f"reader reports status {payload.get('status')!r}")
    return payload
