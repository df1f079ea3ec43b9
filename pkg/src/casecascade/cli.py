"""Command-line entry point.

Exit codes: 0 success, 1 user error (bad flags, paths or data), 2 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import traceback
from collections.abc import Sequence
from pathlib import Path

from ._io import atomic_write_text
from .cascade import (
    PRESETS,
    PipelineConfig,
    build_task1_index,
    resolve_preset,
    run_task1,
    run_task2,
    task1_text_units,
)
from .corpus import LabelSet, compute_stats, load_documents, load_task1, load_task2
from .embedding import (
    AveragedNgramProvider,
    PrecomputedProvider,
    demo_word_vectors,
    load_paragraph_embeddings,
    load_word_vectors,
)
from .errors import CascadeError, ConfigError
from .evaluation import evaluate, per_query_table
from .lexical import LexicalIndex, tokenize
from .ranking import diagnostics_tsv
from .runs import format_run, read_run

logger = logging.getLogger("casecascade")

THREADS_ENV = "CASECASCADE_THREADS"


class UsageError(CascadeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_corpus(p: argparse.ArgumentParser, task2: bool = False) -> None:
    p.add_argument("--corpus", type=Path, help="corpus root directory")
    if not task2:
        p.add_argument("--queries", type=Path, help="query directory (default: <corpus>/queries)")
        p.add_argument("--candidates", type=Path, help="candidate directory (default: <corpus>/candidates)")


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a preset field; repeatable, last wins")


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads, 0 = one per CPU (default: ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="casecascade", description="Lexical-then-semantic case-law retrieval.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--task", choices=("task1", "task2"), default="task1")
    _add_corpus(p)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")

    p = sub.add_parser("index", help="build and save a BM25 index over the candidates")
    _add_corpus(p)
    _add_config(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("retrieve", help="Task 1 run")
    _add_corpus(p)
    _add_config(p)
    _add_threads(p)
    p.add_argument("--embeddings", type=Path,
                   help="word2vec text file (averaged-ngram) or paragraph TSV (precomputed)")
    p.add_argument("--index", type=Path, help="index cache; rebuilt when missing or stale")
    p.add_argument("--diagnostics", type=Path, help="directory for per-query re-ranking TSVs")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("entail", help="Task 2 run")
    _add_corpus(p, task2=True)
    _add_config(p)
    _add_threads(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("evaluate", help="micro P/R/F1 of a run file")
    p.add_argument("--run", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--out", type=Path, help="also write the JSON report here")
    p.add_argument("--table", action="store_true", help="print the per-query table instead of JSON")

    p = sub.add_parser("dump-embeddings-template",
                       help="list the text units a precomputed-embedding run needs vectors for")
    _add_corpus(p)
    _add_config(p)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _overrides(pairs: Sequence[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"override {pair!r} is not KEY=VALUE")
        out[key.strip()] = value.strip()
    return out


def _config(args, default_preset: str) -> PipelineConfig:
    return resolve_preset(args.preset or default_preset, _overrides(args.overrides))


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise UsageError(f"${THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("thread count must be >= 0")
    return n


def _load_task1(args):
    if args.corpus is None and (args.queries is None or args.candidates is None):
        raise UsageError("give --corpus, or both --queries and --candidates")
    return load_task1(args.corpus, queries_dir=args.queries, candidates_dir=args.candidates)


def _require_task(config: PipelineConfig, task: str, command: str) -> None:
    if config.task != task:
        raise ConfigError(f"{command} needs a {task} preset; {config.run_tag!r} is {config.task}")


def _header(command: str, config: PipelineConfig) -> list[str]:
    return [f"command={command}"] + config.describe()


def _index_key(candidates, config: PipelineConfig) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(config.stage1.as_dict(), sort_keys=True).encode())
    h.update(config.granularity.encode())
    for doc in sorted(candidates, key=lambda d: d.id):
        h.update(b"\0" + doc.id.encode() + b"\0" + doc.raw_text.encode())
    return h.hexdigest()


def _cached_index(path: Path | None, candidates, config: PipelineConfig) -> LexicalIndex:
    key = _index_key(candidates, config)
    if path is not None and path.exists():
        try:
            index, meta = LexicalIndex.load(path)
        except CascadeError as exc:
            logger.warning("ignoring unreadable index cache %s: %s", path, exc)
        else:
            if meta.get("corpus_hash") == key:
                logger.info("using cached index %s", path)
                return index
            logger.info("index cache %s is stale; rebuilding", path)
    index = build_task1_index(candidates, config)
    if path is not None:
        index.save(path, {"corpus_hash": key, "granularity": config.granularity})
    return index


def _provider(config: PipelineConfig, embeddings: Path | None, queries, candidates):
    if config.provider == "none":
        return None
    if config.provider == "precomputed":
        if embeddings is None:
            raise UsageError("provider 'precomputed' needs --embeddings <paragraph TSV>")
        return PrecomputedProvider(load_paragraph_embeddings(embeddings))
    if embeddings is not None:
        return AveragedNgramProvider(load_word_vectors(embeddings))
    logger.warning("no --embeddings given; using seeded demo word vectors (no semantics)")
    terms = {t for d in (*queries, *candidates) for t in tokenize(d.raw_text)}
    return AveragedNgramProvider(demo_word_vectors(terms))


def cmd_stats(args) -> int:
    labels = LabelSet.load(args.labels)
    if args.task == "task1":
        queries, candidates = _load_task1(args)
        stats = compute_stats(queries, candidates, labels)
    else:
        if args.corpus is None:
            raise UsageError("stats --task task2 needs --corpus")
        stats = compute_stats(load_task2(args.corpus), None, labels)
    if args.json:
        print(json.dumps({k: v for k, v in vars(stats).items() if v is not None}, indent=2))
    else:
        rows = stats.rows()
        width = max(len(r[0]) for r in rows)
        for name, value in rows:
            print(f"{name:<{width}}  {value}")
    return 0


def cmd_index(args) -> int:
    config = _config(args, "task1-bm25")
    _require_task(config, "task1", "index")
    if args.corpus is None and args.candidates is None:
        raise UsageError("give --corpus or --candidates")
    candidates = load_documents(args.candidates or args.corpus / "candidates")
    if not candidates:
        raise UsageError("no candidate documents found")
    index = build_task1_index(candidates, config)
    index.save(args.out, {"corpus_hash": _index_key(candidates, config), "granularity": config.granularity})
    print(f"indexed {len(index)} units, {len(index.vocab)} terms -> {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    config = _config(args, "task1-bm25")
    _require_task(config, "task1", "retrieve")
    queries, candidates = _load_task1(args)
    provider = _provider(config, args.embeddings, queries, candidates)
    index = _cached_index(args.index, candidates, config)
    run = run_task1(queries, candidates, config, provider, threads=_threads(args), index=index)
    atomic_write_text(args.out, format_run(run, _header("retrieve", config)))
    if args.diagnostics is not None:
        for qid, scores in sorted(run.rerank.items()):
            atomic_write_text(args.diagnostics / f"{qid}.tsv", diagnostics_tsv(scores))
    logger.info("wrote %d queries to %s", len(run.predictions), args.out)
    return 0


def cmd_entail(args) -> int:
    config = _config(args, "task2-fragment")
    _require_task(config, "task2", "entail")
    if args.corpus is None:
        raise UsageError("entail needs --corpus")
    run = run_task2(load_task2(args.corpus), config, threads=_threads(args))
    atomic_write_text(args.out, format_run(run, _header("entail", config)))
    return 0


def cmd_evaluate(args) -> int:
    run, _ = read_run(args.run)
    report = evaluate(run, LabelSet.load(args.labels))
    if args.out is not None:
        atomic_write_text(args.out, report.to_json())
    sys.stdout.write(per_query_table(report) if args.table else report.to_json())
    return 0


def cmd_dump_template(args) -> int:
    config = _config(args, "task1-reduced-sbert")
    _require_task(config, "task1", "dump-embeddings-template")
    queries, candidates = _load_task1(args)
    lines = ["# doc_id\tunit_index\ttext"]
    for unit in task1_text_units(queries, candidates, config):
        text = " ".join(unit.text.split())
        lines.append(f"{unit.doc_id}\t{unit.unit_index}\t{text}")
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "stats": cmd_stats,
    "index": cmd_index,
    "retrieve": cmd_retrieve,
    "entail": cmd_entail,
    "evaluate": cmd_evaluate,
    "dump-embeddings-template": cmd_dump_template,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logger.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (CascadeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        traceback.print_exc()
        print(f"internal error: {type(exc).__name__}: {exc} (traceback above)", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
