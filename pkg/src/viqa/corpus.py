"""Passage and question store, corpus statistics, and question-type tagging.

Corpora arrive as SQuAD-v1.1-shaped JSON and are persisted as JSON Lines
(`passages.jsonl`, `questions.jsonl`) plus a `meta.json` with the schema
version and ingest provenance. Ingestion is single-writer; afterwards the
store is immutable and safe for any number of concurrent readers.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from .analysis import tokenize
from .errors import DataError, IngestError

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test", "external")

WHAT = "What"
WHO = "Who"
WHEN = "When"
WHERE = "Where"
WHY = "Why"
HOW = "How"
HOW_MANY = "HowMany"
OTHERS = "Others"
QUESTION_TYPES = (WHAT, WHO, WHEN, WHERE, WHY, HOW, HOW_MANY, OTHERS)

# Question-word phrases with a documented source; everything else lives in
# the shipped, user-editable lexicon file.
HARD_DEFAULT_PHRASES = {
    "là gì": WHAT,
    "điều gì": WHAT,
    "làm gì": WHAT,
    "cái gì": WHAT,
    "như thế nào": HOW,
}

PASSAGES_FILE = "passages.jsonl"
QUESTIONS_FILE = "questions.jsonl"
META_FILE = "meta.json"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Passage:
    id: str
    article_title: str
    text: str
    split: str


@dataclass(frozen=True)
class GoldAnswer:
    text: str
    answer_start: int


@dataclass(frozen=True)
class QARecord:
    id: str
    question: str
    gold_answers: tuple[GoldAnswer, ...]
    gold_passage_id: str
    split: str
    question_type: str

    @property
    def answer_texts(self) -> list[str]:
        return [a.text for a in self.gold_answers]


@dataclass(frozen=True)
class CorpusStats:
    n_articles: int
    n_passages: int
    n_questions: int
    avg_passage_len: float
    avg_question_len: float
    avg_answer_len: float
    vocab_size: int


@dataclass(frozen=True)
class IngestResult:
    n_passages: int
    n_questions: int
    warnings: tuple[str, ...]


class QuestionTypeLexicon:
    """Question-word phrases mapped to question types.

    Matching picks the longest phrase found anywhere in the normalized
    question (token-aligned), breaking ties by earliest occurrence; no
    match classifies as Others.
    """

    def __init__(self, phrases: dict[str, str]):
        normalized: dict[str, str] = {}
        for phrase, qtype in phrases.items():
            key = " ".join(tokenize(phrase))
            if not key:
                raise ValueError(f"empty lexicon phrase {phrase!r}")
            if qtype not in QUESTION_TYPES:
                raise ValueError(f"unknown question type {qtype!r} for phrase {phrase!r}")
            if normalized.get(key, qtype) != qtype:
                raise ValueError(f"phrase {key!r} maps to both {normalized[key]} and {qtype}")
            normalized[key] = qtype
        self.phrases = normalized
        self._entries = tuple(
            (phrase, qtype, tuple(phrase.split())) for phrase, qtype in sorted(normalized.items())
        )

    @classmethod
    def default(cls) -> "QuestionTypeLexicon":
        """Only the hard default phrases."""
        return cls(dict(HARD_DEFAULT_PHRASES))

    @classmethod
    def shipped(cls) -> "QuestionTypeLexicon":
        """Hard defaults plus the packaged question-word configuration."""
        data = resources.files("viqa.data").joinpath("question_words.json").read_text("utf-8")
        phrases = dict(HARD_DEFAULT_PHRASES)
        phrases.update(json.loads(data))
        return cls(phrases)

    @classmethod
    def from_file(cls, path: str | Path) -> "QuestionTypeLexicon":
        """User lexicon file (phrase -> type JSON object), merged over the defaults."""
        phrases = dict(HARD_DEFAULT_PHRASES)
        phrases.update(json.loads(Path(path).read_text(encoding="utf-8")))
        return cls(phrases)


def classify_question(question: str, lexicon: QuestionTypeLexicon | None = None) -> str:
    """Assign a question type by longest question-word phrase match."""
    lexicon = lexicon if lexicon is not None else QuestionTypeLexicon.default()
    tokens = tokenize(question)
    best: tuple[int, int, str] | None = None  # (-phrase_len, position, type)
    for phrase, qtype, phrase_tokens in lexicon._entries:
        width = len(phrase_tokens)
        for i in range(len(tokens) - width + 1):
            if tuple(tokens[i : i + width]) == phrase_tokens:
                key = (-len(phrase), i, qtype)
                if best is None or key[:2] < best[:2]:
                    best = key
                break
    return best[2] if best else OTHERS


class DocumentStore:
    """JSONL-backed store of passages and question records."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self._passages: dict[str, Passage] | None = None
        self._questions: dict[str, QARecord] | None = None

    # ------------------------------------------------------------------ io

    @property
    def passages_path(self) -> Path:
        return self.data_dir / PASSAGES_FILE

    @property
    def questions_path(self) -> Path:
        return self.data_dir / QUESTIONS_FILE

    @property
    def meta_path(self) -> Path:
        return self.data_dir / META_FILE

    def exists(self) -> bool:
        return self.passages_path.exists() and self.questions_path.exists()

    def _load(self) -> None:
        if self._passages is not None:
            return
        passages: dict[str, Passage] = {}
        questions: dict[str, QARecord] = {}
        if self.passages_path.exists():
            for line in self.passages_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                obj = json.loads(line)
                passages[obj["id"]] = Passage(
                    id=obj["id"],
                    article_title=obj["article_title"],
                    text=obj["text"],
                    split=obj["split"],
                )
        if self.questions_path.exists():
            for line in self.questions_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                obj = json.loads(line)
                questions[obj["id"]] = QARecord(
                    id=obj["id"],
                    question=obj["question"],
                    gold_answers=tuple(
                        GoldAnswer(a["text"], a["answer_start"]) for a in obj["gold_answers"]
                    ),
                    gold_passage_id=obj["gold_passage_id"],
                    split=obj["split"],
                    question_type=obj["question_type"],
                )
        self._passages = passages
        self._questions = questions

    def _write(self) -> None:
        assert self._passages is not None and self._questions is not None
        self.data_dir.mkdir(parents=True, exist_ok=True)
        with self.passages_path.open("w", encoding="utf-8") as fp:
            for pid in sorted(self._passages):
                p = self._passages[pid]
                fp.write(
                    json.dumps(
                        {
                            "id": p.id,
                            "article_title": p.article_title,
                            "text": p.text,
                            "split": p.split,
                        },
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                    + "\n"
                )
        with self.questions_path.open("w", encoding="utf-8") as fp:
            for qid in sorted(self._questions):
                q = self._questions[qid]
                fp.write(
                    json.dumps(
                        {
                            "id": q.id,
                            "question": q.question,
                            "gold_answers": [
                                {"text": a.text, "answer_start": a.answer_start}
                                for a in q.gold_answers
                            ],
                            "gold_passage_id": q.gold_passage_id,
                            "split": q.split,
                            "question_type": q.question_type,
                        },
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                    + "\n"
                )

    def _append_meta(self, entry: dict) -> None:
        meta = {"schema_version": SCHEMA_VERSION, "ingests": []}
        if self.meta_path.exists():
            meta = json.loads(self.meta_path.read_text(encoding="utf-8"))
        meta["schema_version"] = SCHEMA_VERSION
        meta.setdefault("ingests", []).append(entry)
        self.meta_path.write_text(
            json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    # -------------------------------------------------------------- ingest

    def ingest_squad_json(
        self,
        source: str | Path | bytes,
        split: str,
        lexicon: QuestionTypeLexicon | None = None,
    ) -> IngestResult:
        """Ingest a SQuAD-v1.1-shaped JSON file or byte stream into the store.

        Passage ids are deterministic `title#paragraph_index`, so re-ingesting
        the same file overwrites the same records. Records whose answer
        offsets do not match the context are skipped with a warning rather
        than failing the whole ingest.
        """
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}, expected one of {SPLITS}")
        source_name = "<bytes>"
        if isinstance(source, (str, Path)):
            source_name = str(source)
            raw = Path(source).read_bytes()
        elif isinstance(source, bytes):
            raw = source
        else:  # binary file object
            raw = source.read()
            source_name = getattr(source, "name", source_name)
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError(f"{source_name}: not valid UTF-8 at byte {exc.start}") from exc
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            byte_offset = len(text[: exc.pos].encode("utf-8"))
            raise IngestError(
                f"{source_name}: malformed JSON at byte {byte_offset}: {exc.msg}"
            ) from exc
        if not isinstance(payload, dict) or not isinstance(payload.get("data"), list):
            raise IngestError(f"{source_name}: missing top-level 'data' array")

        lexicon = lexicon if lexicon is not None else QuestionTypeLexicon.shipped()
        self._load()
        assert self._passages is not None and self._questions is not None
        warnings: list[str] = []
        n_passages = 0
        n_questions = 0
        for article in payload["data"]:
            title = str(article.get("title", ""))
            for para_idx, paragraph in enumerate(article.get("paragraphs", [])):
                context = paragraph.get("context")
                if not isinstance(context, str) or not tokenize(context):
                    warnings.append(f"{title}#{para_idx}: empty or missing context; skipped")
                    continue
                pid = f"{title}#{para_idx}"
                self._passages[pid] = Passage(
                    id=pid, article_title=title, text=context, split=split
                )
                n_passages += 1
                for qa in paragraph.get("qas", []):
                    qid = qa.get("id")
                    question = qa.get("question")
                    answers = qa.get("answers") or []
                    if not qid or not isinstance(question, str) or not question.strip():
                        warnings.append(f"{pid}: qa with missing id or question; skipped")
                        continue
                    golds: list[GoldAnswer] = []
                    bad = None
                    for ans in answers:
                        a_text = ans.get("text")
                        start = ans.get("answer_start")
                        if not isinstance(a_text, str) or not isinstance(start, int):
                            bad = "malformed answer entry"
                            break
                        if context[start : start + len(a_text)] != a_text:
                            bad = f"answer_start {start} does not match context"
                            break
                        golds.append(GoldAnswer(a_text, start))
                    if bad is not None or not golds:
                        warnings.append(f"{qid}: {bad or 'no answers'}; record skipped")
                        continue
                    self._questions[str(qid)] = QARecord(
                        id=str(qid),
                        question=question,
                        gold_answers=tuple(golds),
                        gold_passage_id=pid,
                        split=split,
                        question_type=classify_question(question, lexicon),
                    )
                    n_questions += 1
        self._write()
        self._append_meta(
            {
                "source": source_name,
                "split": split,
                "n_passages": n_passages,
                "n_questions": n_questions,
                "n_warnings": len(warnings),
                "ingested_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            }
        )
        for w in warnings:
            logger.warning("ingest: %s", w)
        return IngestResult(n_passages, n_questions, tuple(warnings))

    # ------------------------------------------------------------- queries

    def passages(self, split: str | None = None) -> list[Passage]:
        self._require_store()
        assert self._passages is not None
        items = sorted(self._passages.values(), key=lambda p: p.id)
        if split is None:
            return items
        self._check_split(split)
        return [p for p in items if p.split == split]

    def questions(self, split: str | None = None) -> list[QARecord]:
        self._require_store()
        assert self._questions is not None
        items = sorted(self._questions.values(), key=lambda q: q.id)
        if split is None:
            return items
        self._check_split(split)
        return [q for q in items if q.split == split]

    def passage_by_id(self, pid: str) -> Passage:
        self._require_store()
        assert self._passages is not None
        try:
            return self._passages[pid]
        except KeyError:
            raise DataError(f"unknown passage id {pid!r}") from None

    def corpus_stats(
        self, split: str, tokenizer: Callable[[str], list[str]] = tokenize
    ) -> CorpusStats:
        """Token-level statistics over one split's passages, questions, and answers."""
        self._check_split(split)
        passages = self.passages(split)
        questions = self.questions(split)
        if not passages and not questions:
            raise DataError(f"store has no data for split {split!r}")
        vocab: set[str] = set()
        p_lens = []
        for p in passages:
            toks = tokenizer(p.text)
            p_lens.append(len(toks))
            vocab.update(toks)
        q_lens = []
        a_lens = []
        for q in questions:
            toks = tokenizer(q.question)
            q_lens.append(len(toks))
            vocab.update(toks)
            for a in q.gold_answers:
                a_toks = tokenizer(a.text)
                a_lens.append(len(a_toks))
                vocab.update(a_toks)
        return CorpusStats(
            n_articles=len({p.article_title for p in passages}),
            n_passages=len(passages),
            n_questions=len(questions),
            avg_passage_len=_mean(p_lens),
            avg_question_len=_mean(q_lens),
            avg_answer_len=_mean(a_lens),
            vocab_size=len(vocab),
        )

    def _require_store(self) -> None:
        if self._passages is None and not self.exists():
            raise DataError(
                f"no document store under {self.data_dir}; run `viqa ingest` first"
            )
        self._load()

    @staticmethod
    def _check_split(split: str) -> None:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}, expected one of {SPLITS}")


def _mean(values: Iterable[int]) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0
