"""Command-line interface.

Settings resolve in order: built-in defaults, then the config file
(--config, flat key=value lines mirroring flag names), then VIQA_*
environment variables, then explicit flags. Exit codes: 0 success,
1 usage, 2 data error, 3 network or remote-reader error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import shlex
import sys
import time
from dataclasses import dataclass, fields, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from . import __version__
from .analysis import Analyzer, load_compounds
from .bm25 import InvertedIndex, build_bm25_index
from .corpus import SPLITS, DocumentStore, QuestionTypeLexicon
from .errors import DataError, RemoteReaderError, UsageError, ViqaError
from .evaluation import (
    RetrievalRun,
    format_report_table,
    precision_at_k,
    write_positions_csv,
    write_report_csv,
    write_report_json,
    write_sweep_csv,
)
from .pipeline import QAPipeline
from .reader import ReaderConfig, check_reader_health
from .selector import FusionConfig, load_tuned_alpha, tune_alpha, write_alpha_tuning
from .tfidf import TfidfIndex, build_tfidf_index

logger = logging.getLogger(__name__)

ENV_PREFIX = "VIQA_"

TFIDF_INDEX_FILE = "tfidf.idx"
BM25_INDEX_FILE = "bm25.idx"
ALPHA_TUNING_FILE = "alpha_tuning.json"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_REMOTE = 3


@dataclass
class RunConfig:
    data_dir: Path = Path("data")
    retriever: str = "bm25"
    segmentation: str = "default-per-retriever"
    reader: str = "baseline"
    endpoint: str | None = None
    k: int = 5
    alpha: float | None = None
    seed: int = 13
    out: Path | None = None
    compounds: Path | None = None
    segment_command: str | None = None
    raw_retriever_scores: bool = False
    max_parallel: int = 4
    timeout: float = 10.0

    def validate(self) -> None:
        if self.retriever not in ("tfidf", "bm25"):
            raise UsageError(f"retriever must be 'tfidf' or 'bm25', got {self.retriever!r}")
        if self.segmentation not in ("on", "off", "default-per-retriever"):
            raise UsageError(f"invalid segmentation mode {self.segmentation!r}")
        if self.reader not in ("baseline", "remote"):
            raise UsageError(f"reader must be 'baseline' or 'remote', got {self.reader!r}")
        if self.reader == "remote" and not self.endpoint:
            raise UsageError("reader 'remote' requires --endpoint")
        if self.k < 1:
            raise UsageError(f"k must be >= 1, got {self.k}")
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise UsageError(f"alpha must be in [0, 1], got {self.alpha}")


_FIELD_PARSERS = {
    "data_dir": Path,
    "retriever": str,
    "segmentation": str,
    "reader": str,
    "endpoint": str,
    "k": int,
    "alpha": float,
    "seed": int,
    "out": Path,
    "compounds": Path,
    "segment_command": str,
    "raw_retriever_scores": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
    "max_parallel": int,
    "timeout": float,
}


def _parse_config_file(path: Path) -> dict:
    values = {}
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except UnicodeDecodeError:
        raise DataError(f"config file {path} is not valid UTF-8") from None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_PARSERS:
            raise UsageError(f"{path}:{line_no}: unknown setting {key!r}")
        values[key] = _FIELD_PARSERS[key](value)
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    config_path = getattr(args, "config", None) or os.environ.get(ENV_PREFIX + "CONFIG")
    if config_path:
        config = replace(config, **_parse_config_file(Path(config_path)))
    env_values = {}
    for field in fields(RunConfig):
        raw = os.environ.get(ENV_PREFIX + field.name.upper())
        if raw is not None:
            env_values[field.name] = _FIELD_PARSERS[field.name](raw)
    config = replace(config, **env_values)
    flag_values = {
        field.name: getattr(args, field.name)
        for field in fields(RunConfig)
        if getattr(args, field.name, None) is not None
    }
    config = replace(config, **flag_values)
    config.validate()
    return config


# --------------------------------------------------------------- helpers


def _segmentation_on(config: RunConfig, retriever: str) -> bool:
    if config.segmentation == "default-per-retriever":
        return retriever == "bm25"
    return config.segmentation == "on"


def _build_analyzer(config: RunConfig, retriever: str) -> Analyzer:
    ngram_max = 2 if retriever == "tfidf" else 1
    if not _segmentation_on(config, retriever):
        return Analyzer(segmenter="none", ngram_max=ngram_max)
    if config.segment_command:
        return Analyzer(
            segmenter="external_command",
            ngram_max=ngram_max,
            command=tuple(shlex.split(config.segment_command)),
            command_timeout=config.timeout,
        )
    if config.compounds:
        compounds = load_compounds(config.compounds)
    else:
        with resources.as_file(
            resources.files("viqa.data").joinpath("compound_words.txt")
        ) as path:
            compounds = load_compounds(path)
    return Analyzer(
        segmenter="builtin_dictionary", ngram_max=ngram_max, compounds=compounds
    )


def _index_path(config: RunConfig) -> Path:
    name = TFIDF_INDEX_FILE if config.retriever == "tfidf" else BM25_INDEX_FILE
    return config.data_dir / name


def _load_index(config: RunConfig):
    if config.retriever == "tfidf":
        return TfidfIndex.load(_index_path(config))
    return InvertedIndex.load(_index_path(config))


def _resolve_alpha(config: RunConfig) -> float:
    if config.alpha is not None:
        return config.alpha
    tuned = load_tuned_alpha(config.data_dir / ALPHA_TUNING_FILE)
    return tuned if tuned is not None else 0.5


def _build_pipeline(config: RunConfig) -> QAPipeline:
    store = DocumentStore(config.data_dir)
    index = _load_index(config)
    if config.reader == "remote":
        check_reader_health(config.endpoint, timeout=config.timeout)
    return QAPipeline(
        store,
        index,
        reader=config.reader,
        endpoint=config.endpoint,
        reader_config=ReaderConfig(),
        fusion=FusionConfig(alpha=_resolve_alpha(config)),
        k=config.k,
        normalize_retriever=not config.raw_retriever_scores,
        max_parallel=config.max_parallel,
        timeout=config.timeout,
    )


def _out_dir(config: RunConfig) -> Path:
    out = config.out if config.out is not None else config.data_dir / "reports"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out_dir: Path, command: str, config: RunConfig, started: float, extra: dict) -> None:
    manifest = {
        "command": command,
        "config": {
            f.name: str(getattr(config, f.name)) if getattr(config, f.name) is not None else None
            for f in fields(RunConfig)
        },
        "seed": config.seed,
        "versions": {"viqa": __version__, "python": sys.version.split()[0]},
        "started_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "duration_s": round(time.perf_counter() - started, 3),
    }
    manifest.update(extra)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _parse_ks(raw: str) -> list[int]:
    try:
        ks = [int(part) for part in raw.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"invalid k list {raw!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise UsageError("every k must be a positive integer")
    return ks


# -------------------------------------------------------------- commands


def cmd_ingest(config: RunConfig, args: argparse.Namespace) -> int:
    started = time.perf_counter()
    store = DocumentStore(config.data_dir)
    lexicon = (
        QuestionTypeLexicon.from_file(args.lexicon) if args.lexicon
        else QuestionTypeLexicon.shipped()
    )
    result = store.ingest_squad_json(args.path, args.split, lexicon=lexicon)
    print(
        f"ingested {result.n_passages} passages and {result.n_questions} questions "
        f"into split '{args.split}' ({len(result.warnings)} warnings)"
    )
    for warning in result.warnings[:10]:
        print(f"  warning: {warning}", file=sys.stderr)
    if len(result.warnings) > 10:
        print(f"  ... {len(result.warnings) - 10} more warnings", file=sys.stderr)
    _write_manifest(
        config.data_dir, "ingest", config, started,
        {"source": str(args.path), "split": args.split,
         "n_passages": result.n_passages, "n_questions": result.n_questions},
    )
    return EXIT_OK


def cmd_index(config: RunConfig, args: argparse.Namespace) -> int:
    started = time.perf_counter()
    store = DocumentStore(config.data_dir)
    passages = store.passages()
    if not passages:
        raise DataError("document store is empty; run `viqa ingest` first")
    analyzer = _build_analyzer(config, config.retriever)
    path = _index_path(config)
    if config.retriever == "tfidf":
        index = build_tfidf_index(passages, analyzer)
    else:
        index = build_bm25_index(passages, analyzer)
    index.save(path)
    print(f"indexed {len(passages)} passages with {config.retriever} into {path}")
    _write_manifest(
        config.data_dir, "index", config, started,
        {"retriever": config.retriever, "n_passages": len(passages)},
    )
    return EXIT_OK


def cmd_retrieve_eval(config: RunConfig, args: argparse.Namespace) -> int:
    started = time.perf_counter()
    ks = _parse_ks(args.ks)
    store = DocumentStore(config.data_dir)
    index = _load_index(config)
    records = store.questions(args.split)
    if not records:
        raise DataError(f"no questions in split {args.split!r}")
    k_max = max(ks)
    run = RetrievalRun({r.id: index.query(r.question, k_max) for r in records}, k_max)
    gold = {r.id: r.gold_passage_id for r in records}
    table = {k: precision_at_k(run, gold, k) for k in sorted(set(ks))}
    out_dir = _out_dir(config)
    (out_dir / "retrieval_report.json").write_text(
        json.dumps(
            {"retriever": config.retriever, "split": args.split,
             "p_at_k": {str(k): v for k, v in table.items()}},
            ensure_ascii=False, indent=2, sort_keys=True,
        ) + "\n",
        encoding="utf-8",
    )
    print(f"P@k for {config.retriever} on split '{args.split}' ({len(records)} questions):")
    for k, value in table.items():
        print(f"  P@{k:<3d} {value:6.2f}")
    _write_manifest(out_dir, "retrieve-eval", config, started, {"ks": ks, "split": args.split})
    return EXIT_OK


def cmd_answer(config: RunConfig, args: argparse.Namespace) -> int:
    pipeline = _build_pipeline(config)
    selected = pipeline.answer(args.question)
    if selected is None:
        print("no answer: no passage matched the question")
        return EXIT_OK
    print(f"answer: {selected.answer}")
    print(f"score: {selected.score:.6f}")
    print(f"passage: {selected.passage_id} (rank {selected.source_rank})")
    return EXIT_OK


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    started = time.perf_counter()
    pipeline = _build_pipeline(config)
    records = pipeline.store.questions(args.split)
    if not records:
        raise DataError(f"no questions in split {args.split!r}")
    report, _ = pipeline.evaluate_split(records, k=config.k)
    out_dir = _out_dir(config)
    write_report_json(report, out_dir / "report.json")
    write_report_csv(report, out_dir / "report.csv")
    write_positions_csv(report.answer_position_hist, out_dir / "positions.csv")
    print(format_report_table(report))
    print(f"report written to {out_dir}")
    _write_manifest(out_dir, "eval", config, started,
                    {"split": args.split, "n_questions": len(records)})
    return EXIT_OK


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    started = time.perf_counter()
    ks = _parse_ks(args.ks)
    pipeline = _build_pipeline(config)
    records = pipeline.store.questions(args.split)
    if not records:
        raise DataError(f"no questions in split {args.split!r}")
    out_dir = _out_dir(config)
    rows = pipeline.sweep(records, ks, out_csv=out_dir / "sweep.csv")
    print("k     EM      F1")
    for row in rows:
        print(f"{row['k']:<5d} {row['em']:6.2f}  {row['f1']:6.2f}")
    _write_manifest(out_dir, "sweep", config, started, {"ks": ks, "split": args.split})
    return EXIT_OK


def cmd_tune_alpha(config: RunConfig, args: argparse.Namespace) -> int:
    started = time.perf_counter()
    pipeline = _build_pipeline(config)
    records = pipeline.store.questions("train")
    if len(records) < args.n_pairs:
        raise DataError(
            f"train split has {len(records)} records, fewer than n_pairs={args.n_pairs}"
        )
    sample = random.Random(config.seed).sample(records, args.n_pairs)
    result = tune_alpha(
        sample, pipeline.candidate_fn(config.k), grid_step=args.step, metric=args.metric
    )
    tuning_path = config.data_dir / ALPHA_TUNING_FILE
    write_alpha_tuning(tuning_path, result, config.seed)
    print(
        f"tuned alpha = {result.alpha:.2f} ({result.metric} = {result.metric_value:.2f}) "
        f"over {len(sample)} pairs; written to {tuning_path}"
    )
    _write_manifest(config.data_dir, "tune-alpha", config, started,
                    {"n_pairs": args.n_pairs, "step": args.step, "metric": args.metric})
    return EXIT_OK


def cmd_repl(config: RunConfig, args: argparse.Namespace) -> int:
    pipeline = _build_pipeline(config)
    print("interactive QA; empty line or 'exit' to quit")
    while True:
        try:
            question = input("? ").strip()
        except EOFError:
            break
        if not question or question == "exit":
            break
        started = time.perf_counter()
        selected = pipeline.answer(question)
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        if selected is None:
            print(f"no answer ({elapsed_ms:.0f} ms)")
        else:
            print(
                f"{selected.answer}  [score {selected.score:.4f}, "
                f"passage {selected.passage_id} rank {selected.source_rank}, "
                f"{elapsed_ms:.0f} ms]"
            )
    return EXIT_OK


# ------------------------------------------------------------ arg parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key=value config file")
    common.add_argument("--data-dir", dest="data_dir", type=Path)
    common.add_argument("--retriever", choices=("tfidf", "bm25"))
    common.add_argument("--segmentation", choices=("on", "off", "default-per-retriever"))
    common.add_argument("--reader", choices=("baseline", "remote"))
    common.add_argument("--endpoint")
    common.add_argument("--k", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path)
    common.add_argument("--compounds", type=Path, help="compound-word lexicon file")
    common.add_argument("--segment-command", dest="segment_command",
                        help="external segmenter command line")
    common.add_argument("--raw-retriever-scores", dest="raw_retriever_scores",
                        action="store_const", const=True,
                        help="fuse raw retriever scores instead of softmax")
    common.add_argument("--max-parallel", dest="max_parallel", type=int)
    common.add_argument("--timeout", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="viqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="load a SQuAD-format JSON file")
    p.add_argument("path", type=Path)
    p.add_argument("--split", choices=SPLITS, default="train")
    p.add_argument("--lexicon", type=Path, help="question-word lexicon JSON")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", parents=[common], help="build the retriever index")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve-eval", parents=[common], help="P@k over a split")
    p.add_argument("--ks", default="1,5,10,15,20,25,30")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.set_defaults(func=cmd_retrieve_eval)

    p = sub.add_parser("answer", parents=[common], help="answer one question")
    p.add_argument("question")
    p.set_defaults(func=cmd_answer)

    p = sub.add_parser("eval", parents=[common], help="end-to-end EM/F1 report")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="EM/F1 across k values")
    p.add_argument("--ks", default="1,5,10,15,20,25,30")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune-alpha", parents=[common], help="grid-search the fusion weight")
    p.add_argument("--n-pairs", dest="n_pairs", type=int, default=1000)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--metric", choices=("EM", "F1"), default="F1")
    p.set_defaults(func=cmd_tune_alpha)

    p = sub.add_parser("repl", parents=[common], help="interactive question loop")
    p.set_defaults(func=cmd_repl)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
        return args.func(config, args)
    except UsageError as exc:
        print(f"viqa: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RemoteReaderError as exc:
        print(f"viqa: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (DataError, ValueError, OSError, UnicodeDecodeError) as exc:
        print(f"viqa: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ViqaError as exc:
        print(f"viqa: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
