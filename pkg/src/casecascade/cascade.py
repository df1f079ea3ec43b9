"""End-to-end pipelines.

Task 1 (case retrieval): BM25 over candidate paragraphs picks the
``reduce_to`` best cases; optionally an embedding provider re-scores only
those by max-pooled paragraph-pair cosine; the best ``predict_k`` are kept.

Task 2 (entailing paragraph): per query, BM25 over that query's own pool of
candidate paragraphs, with the query built either from the entailed
fragment alone or from a sentence window around where the fragment is
found in the base case.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import re
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TypeVar

import numpy as np

from .corpus import (
    FRAGMENT_MARKER,
    Document,
    EntailmentCase,
    LabelSet,
    QueryCase,
    segment_sentences,
)
from .embedding import EmbeddingProvider, TextUnit
from .errors import ConfigError, CorpusError, EmptyVocabularyError
from .lexical import BM25Params, LexicalIndex, tokenize
from .ranking import DEFAULT_MATRIX_CAP, DocScore, score_candidate, top_k
from .runs import Prediction, RunResult

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

TASK1_PARAMS = BM25Params(k1=1.6, b=0.99, ngram_min=2, ngram_max=6, max_df=0.90, min_df=1,
                          remove_stopwords=True)
TASK2_PARAMS = BM25Params(k1=1.6, b=0.7, ngram_min=1, ngram_max=1, max_df=0.65, min_df=1,
                          remove_stopwords=False)

PROVIDERS = ("none", "averaged-ngram", "precomputed")
_MODE = re.compile(r"base_window\(\s*(\d+)\s*,\s*\+?(\d+)\s*\)|base_window:(\d+):(\d+)")


@dataclass(frozen=True)
class QueryMode:
    """How a Task 2 query is built: the fragment alone, or a base-case window."""

    kind: str = "fragment_only"
    before: int = 0
    after: int = 0

    def __post_init__(self):
        if self.kind not in ("fragment_only", "base_window"):
            raise ConfigError(f"unknown query mode {self.kind!r}")
        if self.before < 0 or self.after < 0:
            raise ConfigError("window sizes must be non-negative")

    @classmethod
    def parse(cls, text: str) -> QueryMode:
        text = text.strip()
        if text == "fragment_only":
            return cls()
        m = _MODE.fullmatch(text)
        if not m:
            raise ConfigError(
                f"bad query mode {text!r}; use fragment_only or base_window(<before>,<after>)"
            )
        before, after = (m.group(1), m.group(2)) if m.group(1) is not None else (m.group(3), m.group(4))
        return cls("base_window", int(before), int(after))

    def __str__(self) -> str:
        return "fragment_only" if self.kind == "fragment_only" else f"base_window({self.before},{self.after})"


@dataclass(frozen=True)
class PipelineConfig:
    task: str = "task1"
    stage1: BM25Params = TASK1_PARAMS
    reduce_to: int = 100
    provider: str = "none"
    predict_k: int = 5
    query_mode: QueryMode = QueryMode()
    granularity: str = "paragraph"
    context_before: int = 3
    context_after: int = 3
    marker: str = FRAGMENT_MARKER
    match_threshold: float = 0.6
    matrix_cap: int = DEFAULT_MATRIX_CAP
    run_tag: str = "run"

    def __post_init__(self):
        if self.task not in ("task1", "task2"):
            raise ConfigError(f"task must be task1 or task2, got {self.task!r}")
        if self.provider not in PROVIDERS:
            raise ConfigError(f"provider must be one of {', '.join(PROVIDERS)}; got {self.provider!r}")
        if self.granularity not in ("paragraph", "document"):
            raise ConfigError(f"granularity must be paragraph or document, got {self.granularity!r}")
        if self.predict_k < 1:
            raise ConfigError("predict_k must be >= 1")
        if self.reduce_to < self.predict_k:
            raise ConfigError(f"reduce_to ({self.reduce_to}) must be >= predict_k ({self.predict_k})")
        if self.context_before < 0 or self.context_after < 0:
            raise ConfigError("context window sizes must be non-negative")
        if not self.marker:
            raise ConfigError("marker must be non-empty")
        if not 0 < self.match_threshold <= 1:
            raise ConfigError("match_threshold must be in (0, 1]")

    def flat(self) -> dict[str, str]:
        """Every setting as a string, keyed the way overrides name them."""
        out = {f.name: _fmt(getattr(self, f.name)) for f in dataclasses.fields(self) if f.name != "stage1"}
        out.update({k: _fmt(v) for k, v in self.stage1.as_dict().items()})
        return out

    def describe(self) -> list[str]:
        return [f"{k}={v}" for k, v in sorted(self.flat().items())]

    def with_overrides(self, overrides: Mapping[str, str]) -> PipelineConfig:
        """Apply ``key=value`` string overrides (last one wins)."""
        params = self.stage1.as_dict()
        top = {}
        for key, raw in overrides.items():
            if key in params:
                params[key] = _parse_param(key, raw)
            elif key in _TOP_PARSERS:
                top[key] = _TOP_PARSERS[key](raw)
            else:
                valid = sorted(set(params) | set(_TOP_PARSERS))
                raise ConfigError(f"unknown setting {key!r}; valid keys: {', '.join(valid)}")
        return dataclasses.replace(self, stage1=BM25Params(**params), **top)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _parse_number(raw: str) -> int | float:
    # integer-looking df thresholds are absolute counts, anything else a proportion
    try:
        return int(raw)
    except ValueError:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"not a number: {raw!r}") from None


def _parse_param(key: str, raw: str):
    try:
        if key in ("k1", "b"):
            return float(raw)
        if key in ("ngram_min", "ngram_max"):
            return int(raw)
        if key in ("max_df", "min_df"):
            return _parse_number(raw)
        if key == "remove_stopwords":
            return _parse_bool(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def _int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"not an integer: {raw!r}") from None


def _float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"not a number: {raw!r}") from None


_TOP_PARSERS: dict[str, Callable[[str], object]] = {
    "task": str,
    "reduce_to": _int,
    "provider": str,
    "predict_k": _int,
    "query_mode": QueryMode.parse,
    "granularity": str,
    "context_before": _int,
    "context_after": _int,
    "marker": str,
    "match_threshold": _float,
    "matrix_cap": _int,
    "run_tag": str,
}

PRESETS: dict[str, PipelineConfig] = {
    "task1-bm25": PipelineConfig(run_tag="task1-bm25"),
    "task1-reduced-sent2vec": PipelineConfig(provider="averaged-ngram", run_tag="task1-reduced-sent2vec"),
    "task1-reduced-sbert": PipelineConfig(provider="precomputed", run_tag="task1-reduced-sbert"),
    "task2-fragment": PipelineConfig(task="task2", stage1=TASK2_PARAMS, predict_k=1,
                                     run_tag="task2-fragment"),
    "task2-basewindow": PipelineConfig(task="task2", stage1=TASK2_PARAMS, predict_k=1,
                                       query_mode=QueryMode("base_window", 1, 1),
                                       run_tag="task2-basewindow"),
}


def resolve_preset(name: str | None, overrides: Mapping[str, str] | None = None) -> PipelineConfig:
    if name is None:
        base = PipelineConfig()
    elif name in PRESETS:
        base = PRESETS[name]
    else:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    if overrides:
        for key, value in overrides.items():
            logger.info("override %s=%s", key, value)
        base = base.with_overrides(overrides)
    return base


def _parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int) -> list[R]:
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


# -- Task 1 ----------------------------------------------------------------


def as_query_case(query: Document | QueryCase, config: PipelineConfig) -> QueryCase:
    if isinstance(query, QueryCase):
        return query
    return QueryCase.from_document(query, config.context_before, config.context_after, config.marker)


def stage1_query_text(query: QueryCase) -> str:
    """Citation-context blocks joined together, or the whole text if there are none."""
    blocks = query.block_texts()
    return " ".join(blocks) if blocks else query.document.raw_text


def query_units(query: QueryCase, granularity: str = "paragraph") -> list[TextUnit]:
    """Query-side units for re-ranking.

    Paragraph granularity: one unit per context block (unit index = block
    number), or the document's paragraphs when it has no marker.
    Document granularity: the stage-1 query text as unit ``-1``.
    """
    if granularity == "document":
        return [TextUnit(query.id, -1, stage1_query_text(query))]
    blocks = query.block_texts()
    if blocks:
        return [TextUnit(query.id, i, text) for i, text in enumerate(blocks)]
    return [TextUnit(query.id, p.index, p.text) for p in query.document.paragraphs]


def candidate_units(doc: Document, granularity: str = "paragraph") -> list[TextUnit]:
    if granularity == "document":
        return [TextUnit(doc.id, -1, doc.raw_text)] if doc.raw_text.strip() else []
    return [TextUnit(doc.id, p.index, p.text) for p in doc.paragraphs]


def build_task1_index(candidates: Sequence[Document], config: PipelineConfig) -> LexicalIndex:
    units = []
    for doc in candidates:
        found = candidate_units(doc, config.granularity)
        if not found:
            logger.warning("candidate %s has no non-empty paragraphs; excluded", doc.id)
        units.extend((u.doc_id, u.unit_index, u.text) for u in found)
    if not units:
        raise CorpusError("no candidate has any text to index")
    return LexicalIndex.build(units, config.stage1)


def _embed_all(provider: EmbeddingProvider, units: Sequence[TextUnit]) -> np.ndarray:
    return np.vstack([np.asarray(provider.embed(u), dtype=np.float64) for u in units])


def run_task1(
    queries: Sequence[Document | QueryCase],
    candidates: Sequence[Document],
    config: PipelineConfig,
    provider: EmbeddingProvider | None = None,
    *,
    threads: int = 1,
    index: LexicalIndex | None = None,
) -> RunResult:
    """Rank candidate cases for every query.

    Stage 1 keeps the ``reduce_to`` best cases by BM25 (a case scores as
    its best unit). With ``config.provider == "none"`` the first
    ``predict_k`` of those are the predictions; otherwise they are re-scored
    by max-pooled cosine and the best ``predict_k`` kept. A query never
    retrieves itself.
    """
    if config.task != "task1":
        raise ConfigError("run_task1 needs a task1 configuration")
    if config.provider != "none" and provider is None:
        raise ConfigError(f"provider {config.provider!r} selected but no embedding provider given")
    cases = [as_query_case(q, config) for q in queries]
    if len({c.id for c in cases}) != len(cases):
        raise CorpusError("duplicate query ids")
    if index is None:
        index = build_task1_index(candidates, config)

    def stage1(case: QueryCase) -> list[tuple[str, float]]:
        terms = index.query_terms(stage1_query_text(case))
        return index.rank_documents(terms, config.reduce_to, exclude_id=case.id)

    stage1_lists = dict(zip((c.id for c in cases), _parallel_map(stage1, cases, threads)))
    result = RunResult(config.run_tag, {}, stage1=stage1_lists)

    if config.provider == "none":
        for qid, ranked in stage1_lists.items():
            result.predictions[qid] = [Prediction(cid, score) for cid, score in ranked[:config.predict_k]]
        return result

    by_id = {d.id: d for d in candidates}
    needed = sorted({cid for ranked in stage1_lists.values() for cid, _ in ranked})
    cand_vectors = dict(zip(
        needed,
        _parallel_map(lambda cid: _embed_all(provider, candidate_units(by_id[cid], config.granularity)),
                      needed, threads),
    ))

    def stage2(case: QueryCase) -> list[DocScore]:
        units = query_units(case, config.granularity)
        if not units:
            logger.warning("query %s has no text units; no predictions", case.id)
            return []
        qv = _embed_all(provider, units)
        scores = [score_candidate(qv, cand_vectors[cid], cid, case.id, config.matrix_cap)
                  for cid, _ in stage1_lists[case.id]]
        return top_k(scores, len(scores)) if scores else []

    for case, ranked in zip(cases, _parallel_map(stage2, cases, threads)):
        result.rerank[case.id] = ranked
        result.predictions[case.id] = [Prediction(s.candidate_id, s.score) for s in ranked[:config.predict_k]]
    return result


def task1_text_units(queries: Sequence[Document | QueryCase], candidates: Sequence[Document],
                     config: PipelineConfig) -> list[TextUnit]:
    """Every unit a precomputed-embedding run may need a vector for."""
    units = []
    for q in queries:
        units.extend(query_units(as_query_case(q, config), config.granularity))
    for doc in candidates:
        units.extend(candidate_units(doc, config.granularity))
    return units


def recall_at_k(stage1_output: Mapping[str, Sequence], labels: LabelSet, k: int) -> float:
    """Micro recall of each query's first ``k`` stage-1 candidates.

    ``stage1_output`` maps query id to a ranked list of candidate ids or of
    ``(candidate_id, score)`` pairs. All labelled queries count toward the
    denominator.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    hit = total = 0
    for qid in labels:
        gold = labels[qid]
        ranked = stage1_output.get(qid, [])
        top = {item if isinstance(item, str) else item[0] for item in ranked[:k]}
        hit += len(top & gold)
        total += len(gold)
    return hit / total if total else 0.0


# -- Task 2 ----------------------------------------------------------------


def _jaccard(a: set[str], b: set[str]) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def match_fragment(fragment_sentences: Sequence[str], base_sentences: Sequence[str],
                   threshold: float = 0.6) -> list[int]:
    """Base-case sentence positions where the fragment is found.

    For each fragment sentence, the base sentences with the highest token-set
    Jaccard overlap are taken, provided that overlap reaches ``threshold``.
    """
    base_sets = [set(tokenize(s)) for s in base_sentences]
    found = set()
    for frag in fragment_sentences:
        fset = set(tokenize(frag))
        sims = [_jaccard(fset, b) for b in base_sets]
        best = max(sims, default=0.0)
        if best >= threshold:
            found.update(i for i, s in enumerate(sims) if s == best)
    return sorted(found)


def build_task2_query(case: EntailmentCase, mode: QueryMode, threshold: float = 0.6) -> list[str]:
    """Sentences that make up the Task 2 query for ``case``."""
    fragment = [s.text for s in segment_sentences(case.fragment)]
    if not fragment:
        raise CorpusError(f"query {case.id!r} has an empty entailed fragment")
    if mode.kind == "fragment_only":
        return fragment
    base = [s.text for s in case.base_case.sentences]
    positions = match_fragment(fragment, base, threshold)
    if not positions:
        logger.warning("query %s: fragment not found in base case; using fragment only", case.id)
        return fragment
    last = len(base) - 1
    keep = sorted({i for pos in positions
                   for i in range(max(0, pos - mode.before), min(last, pos + mode.after) + 1)})
    return [base[i] for i in keep]


def rank_pool(case: EntailmentCase, query_text: str, params: BM25Params, k: int) -> list[Prediction]:
    """BM25 over the query's own paragraph pool; vocabulary built from that pool only."""
    if not case.paragraphs:
        raise CorpusError(f"query {case.id!r} has an empty candidate pool")
    try:
        index = LexicalIndex.build(((p.name, p.index, p.text) for p in case.paragraphs), params)
    except EmptyVocabularyError as exc:
        # e.g. a single-paragraph pool under a fractional max_df: every score is 0
        logger.warning("query %s: %s; falling back to pool order", case.id, exc)
        ordered = sorted(case.paragraphs, key=lambda p: (p.name, p.index))
        return [Prediction(p.name, 0.0, p.index) for p in ordered[:k]]
    ranked = index.rank_units(index.query_terms(query_text), k)
    return [Prediction(name, score, unit) for name, unit, score in ranked]


def run_task2(cases: Sequence[EntailmentCase], config: PipelineConfig, *, threads: int = 1) -> RunResult:
    if config.task != "task2":
        raise ConfigError("run_task2 needs a task2 configuration")

    def one(case: EntailmentCase) -> list[Prediction]:
        sentences = build_task2_query(case, config.query_mode, config.match_threshold)
        return rank_pool(case, " ".join(sentences), config.stage1, config.predict_k)

    results = _parallel_map(one, list(cases), threads)
    return RunResult(config.run_tag, {c.id: preds for c, preds in zip(cases, results)})
