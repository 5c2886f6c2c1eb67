"""Text normalization, tokenization, n-grams, and word segmentation.

One analysis pipeline feeds the retrievers and the EM/F1 metrics, so every
step is pinned down: punctuation means the Unicode P* and S* categories,
tokens are Unicode-whitespace splits of the normalized text, and segmented
compound words join their syllables with "_".
"""

from __future__ import annotations

import subprocess
import unicodedata
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .errors import SegmenterError

SEGMENTERS = ("none", "builtin_dictionary", "external_command")

# Tokens never contain whitespace, so a space safely separates bigram parts.
NGRAM_SEPARATOR = " "

COMPOUND_JOINER = "_"


def normalize_answer(text: str, *, lowercase: bool = True, strip_punctuation: bool = True) -> str:
    """Canonical text form used by EM/F1 and by the analyzers.

    NFC-normalizes, lowercases, removes punctuation and symbol code points
    (Unicode categories P* and S*), collapses whitespace runs to single
    spaces, and trims.
    """
    text = unicodedata.normalize("NFC", text)
    if lowercase:
        text = text.lower()
    if strip_punctuation:
        text = "".join(ch for ch in text if unicodedata.category(ch)[0] not in "PS")
    text = " ".join(text.split())
    # Removing a code point can make a base letter and a combining mark
    # adjacent; renormalize so the function is idempotent.
    return unicodedata.normalize("NFC", text)


def tokenize(text: str) -> list[str]:
    """Unicode-whitespace tokens of the normalized text; empty input gives []."""
    return normalize_answer(text).split()


@dataclass(frozen=True)
class Analyzer:
    """Configuration for turning raw text into index and query terms.

    ``compounds`` holds normalized multi-syllable phrases for the builtin
    dictionary segmenter. ``command`` is the argv of an external segmenter
    speaking the line protocol: one normalized line in, one segmented line
    out, syllables of a word joined with "_".
    """

    lowercase: bool = True
    strip_punctuation: bool = True
    segmenter: str = "none"
    ngram_max: int = 1
    compounds: frozenset[str] = frozenset()
    command: tuple[str, ...] = ()
    command_timeout: float = 10.0

    def __post_init__(self) -> None:
        if self.segmenter not in SEGMENTERS:
            raise ValueError(f"unknown segmenter {self.segmenter!r}, expected one of {SEGMENTERS}")
        if self.ngram_max not in (1, 2):
            raise ValueError(f"ngram_max must be 1 or 2, got {self.ngram_max}")
        if self.segmenter == "external_command" and not self.command:
            raise ValueError("segmenter 'external_command' requires a command")

    def normalize(self, text: str) -> str:
        return normalize_answer(
            text, lowercase=self.lowercase, strip_punctuation=self.strip_punctuation
        )

    def tokens(self, text: str) -> list[str]:
        return self.normalize(text).split()

    def words(self, text: str) -> list[str]:
        return segment_words(text, self)

    def terms(self, text: str) -> list[str]:
        return ngrams(self.words(text), self.ngram_max)

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "segmenter": self.segmenter,
            "ngram_max": self.ngram_max,
            "compounds": sorted(self.compounds),
            "command": list(self.command),
            "command_timeout": self.command_timeout,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Analyzer":
        return cls(
            lowercase=bool(payload["lowercase"]),
            strip_punctuation=bool(payload["strip_punctuation"]),
            segmenter=str(payload["segmenter"]),
            ngram_max=int(payload["ngram_max"]),
            compounds=frozenset(payload.get("compounds", ())),
            command=tuple(payload.get("command", ())),
            command_timeout=float(payload.get("command_timeout", 10.0)),
        )


def ngrams(tokens: Sequence[str], n: int) -> list[str]:
    """Unigrams for n=1; unigrams plus adjacent space-joined bigrams for n=2."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    out = list(tokens)
    if n == 2:
        out.extend(f"{a}{NGRAM_SEPARATOR}{b}" for a, b in zip(tokens, tokens[1:]))
    return out


def segment_words(text: str, analyzer: Analyzer) -> list[str]:
    """Tokenize and group syllables into words per the analyzer's segmenter.

    With segmenter "none" this equals the analyzer's plain token stream.
    Replacing "_" with " " in the output and rejoining always reproduces
    the normalized input.
    """
    return segment_lines([text], analyzer)[0]


def segment_lines(texts: Sequence[str], analyzer: Analyzer) -> list[list[str]]:
    """Segment many texts at once.

    An external command is spawned once per batch; single-text callers get
    one process per call. Normalization collapses newlines, so each text
    occupies exactly one protocol line.
    """
    normalized = [analyzer.normalize(t) for t in texts]
    if analyzer.segmenter == "none":
        return [line.split() for line in normalized]
    if analyzer.segmenter == "builtin_dictionary":
        return [_segment_greedy(line.split(), analyzer.compounds) for line in normalized]
    return _segment_external(normalized, analyzer.command, analyzer.command_timeout)


def _segment_greedy(tokens: list[str], compounds: frozenset[str]) -> list[str]:
    if not compounds:
        return tokens
    max_len = max(phrase.count(" ") + 1 for phrase in compounds)
    out: list[str] = []
    i = 0
    while i < len(tokens):
        span = 1
        for length in range(min(max_len, len(tokens) - i), 1, -1):
            if " ".join(tokens[i : i + length]) in compounds:
                span = length
                break
        out.append(COMPOUND_JOINER.join(tokens[i : i + span]))
        i += span
    return out


def _segment_external(
    lines: list[str], command: tuple[str, ...], timeout: float
) -> list[list[str]]:
    nonempty = [(i, line) for i, line in enumerate(lines) if line]
    results: list[list[str]] = [[] for _ in lines]
    if not nonempty:
        return results
    payload = "\n".join(line for _, line in nonempty) + "\n"
    try:
        proc = subprocess.run(
            list(command),
            input=payload,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except FileNotFoundError:
        raise SegmenterError(f"segmenter command not found: {command[0]}") from None
    except subprocess.TimeoutExpired:
        raise SegmenterError(
            f"segmenter command {command[0]} timed out after {timeout}s"
        ) from None
    if proc.returncode != 0:
        raise SegmenterError(
            f"segmenter command {command[0]} exited with status {proc.returncode}"
        )
    out_lines = proc.stdout.splitlines()
    if len(out_lines) != len(nonempty):
        raise SegmenterError(
            f"segmenter command {command[0]} returned {len(out_lines)} lines "
            f"for {len(nonempty)} inputs"
        )
    for (i, _), line in zip(nonempty, out_lines):
        results[i] = line.split()
    return results


def load_compounds(path: str | Path) -> frozenset[str]:
    """Load a compound-word lexicon: one phrase per line, '#' comments allowed."""
    phrases = set()
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0]
        phrase = normalize_answer(line)
        if " " in phrase:
            phrases.add(phrase)
    return frozenset(phrases)
