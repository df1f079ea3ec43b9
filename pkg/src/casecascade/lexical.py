"""N-gram vocabularies with document-frequency pruning and Okapi BM25 scoring.

The vocabulary side behaves like a count vectorizer (lowercased word
tokens, optional stopword removal, an n-gram range, ``min_df``/``max_df``
cut-offs); scoring is plain Okapi BM25::

    idf(t)      = ln((N - df(t) + 0.5) / (df(t) + 0.5) + 1)
    score(D, Q) = sum over q in Q of idf(q) * f(q, D) * (k1 + 1)
                  / (f(q, D) + k1 * (1 - b + b * |D| / avgdl))

Document lengths count unigram tokens left after stopword removal,
whatever the n-gram range.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import asdict, dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import ConfigError, EmptyVocabularyError, FormatError

_TOKEN = re.compile(r"[^\W_]{2,}")
# guards floor/ceil against products like 0.29 * 100 = 28.999999999999996
_DF_EPS = 1e-9

INDEX_MAGIC = "CASECASCADE-BM25-INDEX"
INDEX_VERSION = 1


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and return its runs of two or more letters/digits."""
    return _TOKEN.findall(text.lower())


def ngrams(tokens: Sequence[str], lo: int, hi: int) -> list[str]:
    """All contiguous n-grams for ``lo <= n <= hi``, grouped by n then position."""
    if not 1 <= lo <= hi:
        raise ValueError(f"invalid n-gram range ({lo}, {hi})")
    out = []
    for n in range(lo, hi + 1):
        out.extend(" ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1))
    return out


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = resources.files("casecascade").joinpath("data/stopwords_en.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip() and not w.startswith("#"))


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


@dataclass(frozen=True)
class BM25Params:
    k1: float = 1.6
    b: float = 0.75
    ngram_min: int = 1
    ngram_max: int = 1
    max_df: float | int = 1.0
    min_df: float | int = 1
    remove_stopwords: bool = False
    norm: str = "l2"

    def __post_init__(self):
        if not self.k1 >= 0:
            raise ConfigError(f"k1 must be >= 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ConfigError(f"b must be in [0, 1], got {self.b}")
        if not 1 <= self.ngram_min <= self.ngram_max:
            raise ConfigError(f"invalid ngram range ({self.ngram_min}, {self.ngram_max})")
        if _is_int(self.max_df):
            if self.max_df < 1:
                raise ConfigError(f"integer max_df must be >= 1, got {self.max_df}")
        elif not 0 < self.max_df <= 1:
            raise ConfigError(f"fractional max_df must be in (0, 1], got {self.max_df}")
        if _is_int(self.min_df):
            if self.min_df < 1:
                raise ConfigError(f"integer min_df must be >= 1, got {self.min_df}")
        elif not 0 <= self.min_df < 1:
            raise ConfigError(f"fractional min_df must be in [0, 1), got {self.min_df}")
        if self.norm not in ("none", "l1", "l2"):
            raise ConfigError(f"norm must be one of none, l1, l2; got {self.norm!r}")

    def df_bounds(self, n_docs: int) -> tuple[int, int]:
        """Resolve ``(min_df, max_df)`` to inclusive absolute document counts."""
        if _is_int(self.max_df):
            hi = int(self.max_df)
        else:
            hi = math.floor(self.max_df * n_docs + _DF_EPS)
        if _is_int(self.min_df):
            lo = int(self.min_df)
        else:
            lo = math.ceil(self.min_df * n_docs - _DF_EPS)
        if lo > hi:
            # no df can satisfy both bounds, so every term would be dropped
            raise EmptyVocabularyError(
                f"min_df={self.min_df!r} resolves to {lo} documents, above max_df={self.max_df!r} "
                f"which resolves to {hi} (N={n_docs})"
            )
        return lo, hi

    def analyze(self, text: str) -> tuple[list[str], int]:
        """Terms of ``text`` under these settings, plus its length in retained unigrams."""
        return self.analyze_tokens(tokenize(text))

    def analyze_tokens(self, tokens: Sequence[str]) -> tuple[list[str], int]:
        if self.remove_stopwords:
            stop = stopwords()
            tokens = [t for t in tokens if t not in stop]
        return ngrams(tokens, self.ngram_min, self.ngram_max), len(tokens)

    def as_dict(self) -> dict:
        return asdict(self)


def idf(n_docs: int, df: int) -> float:
    return math.log((n_docs - df + 0.5) / (df + 0.5) + 1)


@dataclass(frozen=True, slots=True)
class TermStats:
    df: int
    idf: float


class _TermView(Mapping):
    def __init__(self, vocab: Vocabulary):
        self._vocab = vocab

    def __getitem__(self, term: str) -> TermStats:
        i = self._vocab.term_ids[term]
        return TermStats(int(self._vocab.df[i]), float(self._vocab.idf[i]))

    def __iter__(self) -> Iterator[str]:
        return iter(self._vocab.term_ids)

    def __len__(self) -> int:
        return len(self._vocab.term_ids)


class Vocabulary:
    """Terms that survived df pruning, with their df/idf and corpus-level stats.

    Term ids are assigned in sorted term order so that two builds over the
    same corpus are identical.
    """

    def __init__(self, term_ids: dict[str, int], df: np.ndarray, doc_count: int, avgdl: float,
                 idf_values: np.ndarray | None = None):
        self.term_ids = term_ids
        self.df = np.asarray(df, dtype=np.int64)
        self.doc_count = doc_count
        self.avgdl = avgdl
        if idf_values is None:
            idf_values = np.log((doc_count - self.df + 0.5) / (self.df + 0.5) + 1)
        self.idf = np.asarray(idf_values, dtype=np.float64)

    @property
    def terms(self) -> Mapping[str, TermStats]:
        return _TermView(self)

    def __contains__(self, term: object) -> bool:
        return term in self.term_ids

    def __len__(self) -> int:
        return len(self.term_ids)

    def __repr__(self) -> str:
        return f"Vocabulary(terms={len(self)}, N={self.doc_count}, avgdl={self.avgdl:.3f})"


@dataclass(frozen=True, slots=True)
class IndexedDoc:
    doc_id: str
    unit_index: int
    term_freqs: Mapping[str, int]
    length: int


def _vocab_from_counts(counts: Sequence[Counter], lengths: Sequence[int], params: BM25Params) -> Vocabulary:
    n = len(counts)
    if n == 0:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    df: Counter = Counter()
    for c in counts:
        df.update(c.keys())
    lo, hi = params.df_bounds(n)
    kept = sorted(t for t, d in df.items() if lo <= d <= hi)
    if not kept:
        raise EmptyVocabularyError(
            f"vocabulary is empty after filtering (ngram_range=({params.ngram_min}, {params.ngram_max}), "
            f"remove_stopwords={params.remove_stopwords}, min_df={params.min_df!r}, "
            f"max_df={params.max_df!r}, N={n})"
        )
    return Vocabulary(
        {t: i for i, t in enumerate(kept)},
        np.array([df[t] for t in kept], dtype=np.int64),
        n,
        sum(lengths) / n,
    )


def build_vocabulary(docs: Sequence[Sequence[str]], params: BM25Params) -> Vocabulary:
    """Build a pruned n-gram vocabulary from tokenized documents."""
    counts, lengths = [], []
    for tokens in docs:
        terms, length = params.analyze_tokens(tokens)
        counts.append(Counter(terms))
        lengths.append(length)
    return _vocab_from_counts(counts, lengths, params)


def index_document(doc_id: str, unit_index: int, tokens: Sequence[str], vocab: Vocabulary,
                   params: BM25Params) -> IndexedDoc:
    terms, length = params.analyze_tokens(tokens)
    tf = Counter(t for t in terms if t in vocab.term_ids)
    return IndexedDoc(doc_id, unit_index, dict(tf), length)


def _length_norm(length, avgdl: float, params: BM25Params):
    return params.k1 * (1 - params.b + params.b * length / avgdl)


def bm25_score(query_terms: Iterable[str], doc: IndexedDoc, vocab: Vocabulary, params: BM25Params) -> float:
    """Okapi BM25 of one indexed unit; repeated query terms count once per occurrence."""
    norm = _length_norm(doc.length, vocab.avgdl, params)
    k1p1 = params.k1 + 1
    score = 0.0
    for term in query_terms:
        tf = doc.term_freqs.get(term, 0)
        if not tf:
            continue
        tid = vocab.term_ids.get(term)
        if tid is None:
            continue
        score += vocab.idf[tid] * (tf * k1p1 / (tf + norm))
    return float(score)


def _ranked(items: Iterable[tuple[str, int, float]], top_k: int) -> list[tuple[str, int, float]]:
    return sorted(items, key=lambda x: (-x[2], x[0], x[1]))[:top_k]


def bm25_rank(query_terms: Sequence[str], index: Sequence[IndexedDoc], vocab: Vocabulary,
              params: BM25Params, top_k: int, exclude_id: str | None = None) -> list[tuple[str, int, float]]:
    """Score every unit in ``index`` and return the best ``top_k``.

    Order is descending score, then ascending ``(doc_id, unit_index)``.
    Units belonging to ``exclude_id`` (the query's own document) are skipped.
    This walks every unit; :class:`LexicalIndex` does the same through
    postings lists and is what the pipelines use.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    query_terms = list(query_terms)
    return _ranked(
        ((d.doc_id, d.unit_index, bm25_score(query_terms, d, vocab, params))
         for d in index if d.doc_id != exclude_id),
        top_k,
    )


def tfidf_vector(doc: IndexedDoc, vocab: Vocabulary, norm: str = "l2") -> dict[str, float]:
    """Sparse ``tf * idf`` weights of ``doc``, optionally l1/l2 normalized."""
    weights = {t: tf * float(vocab.idf[vocab.term_ids[t]]) for t, tf in doc.term_freqs.items()
               if t in vocab.term_ids}
    if norm == "l2":
        total = math.sqrt(math.fsum(w * w for w in weights.values()))
    elif norm == "l1":
        total = math.fsum(abs(w) for w in weights.values())
    elif norm == "none":
        return weights
    else:
        raise ValueError(f"unknown norm {norm!r}")
    if total == 0:
        return weights
    return {t: w / total for t, w in weights.items()}


class LexicalIndex:
    """BM25 index over text units (paragraphs or whole documents).

    Units are kept sorted by ``(doc_id, unit_index)`` and scored through a
    flat postings layout, so a stable sort on score alone already yields the
    required tie order.
    """

    def __init__(self, params: BM25Params, vocab: Vocabulary, docs: Sequence[IndexedDoc]):
        self.params = params
        self.vocab = vocab
        self.docs = tuple(sorted(docs, key=lambda d: (d.doc_id, d.unit_index)))
        n = len(self.docs)
        lengths = np.array([d.length for d in self.docs], dtype=np.float64)
        self._norm = _length_norm(lengths, vocab.avgdl, params)

        term_ids, units, tfs = [], [], []
        for u, d in enumerate(self.docs):
            for term, tf in d.term_freqs.items():
                term_ids.append(vocab.term_ids[term])
                units.append(u)
                tfs.append(tf)
        term_arr = np.array(term_ids, dtype=np.int64)
        order = np.argsort(term_arr, kind="stable")
        self._post_units = np.array(units, dtype=np.int64)[order]
        self._post_tf = np.array(tfs, dtype=np.float64)[order]
        self._offsets = np.concatenate(([0], np.cumsum(np.bincount(term_arr, minlength=len(vocab)))))

        self.doc_ids: list[str] = []
        starts = []
        for u, d in enumerate(self.docs):
            if not self.doc_ids or self.doc_ids[-1] != d.doc_id:
                self.doc_ids.append(d.doc_id)
                starts.append(u)
        self._doc_starts = np.array(starts, dtype=np.int64)
        self._unit_doc = np.repeat(np.arange(len(starts)), np.diff(np.append(starts, n))) if n else np.array([], int)

    @classmethod
    def build(cls, units: Iterable[tuple[str, int, str]], params: BM25Params) -> LexicalIndex:
        """Index ``(doc_id, unit_index, text)`` triples."""
        keys, counts, lengths = [], [], []
        for doc_id, unit_index, text in units:
            terms, length = params.analyze(text)
            keys.append((doc_id, unit_index))
            counts.append(Counter(terms))
            lengths.append(length)
        vocab = _vocab_from_counts(counts, lengths, params)
        ids = vocab.term_ids
        docs = [
            IndexedDoc(doc_id, unit_index, {t: c for t, c in cnt.items() if t in ids}, length)
            for (doc_id, unit_index), cnt, length in zip(keys, counts, lengths)
        ]
        return cls(params, vocab, docs)

    def __len__(self) -> int:
        return len(self.docs)

    def query_terms(self, text: str) -> list[str]:
        return self.params.analyze(text)[0]

    def unit_scores(self, query_terms: Iterable[str]) -> np.ndarray:
        """BM25 score of every unit, aligned with :attr:`docs`."""
        scores = np.zeros(len(self.docs))
        k1p1 = self.params.k1 + 1
        for term in query_terms:
            tid = self.vocab.term_ids.get(term)
            if tid is None:
                continue
            lo, hi = self._offsets[tid], self._offsets[tid + 1]
            units = self._post_units[lo:hi]
            tf = self._post_tf[lo:hi]
            scores[units] += self.vocab.idf[tid] * (tf * k1p1 / (tf + self._norm[units]))
        return scores

    def rank_units(self, query_terms: Iterable[str], top_k: int,
                   exclude_id: str | None = None) -> list[tuple[str, int, float]]:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        scores = self.unit_scores(query_terms)
        order = np.argsort(-scores, kind="stable")
        out = []
        for u in order:
            d = self.docs[u]
            if d.doc_id == exclude_id:
                continue
            out.append((d.doc_id, d.unit_index, float(scores[u])))
            if len(out) == top_k:
                break
        return out

    def rank_documents(self, query_terms: Iterable[str], top_k: int,
                       exclude_id: str | None = None) -> list[tuple[str, float]]:
        """Documents ranked by their best-scoring unit."""
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not self.docs:
            return []
        doc_scores = np.maximum.reduceat(self.unit_scores(query_terms), self._doc_starts)
        order = np.argsort(-doc_scores, kind="stable")
        out = []
        for i in order:
            doc_id = self.doc_ids[i]
            if doc_id == exclude_id:
                continue
            out.append((doc_id, float(doc_scores[i])))
            if len(out) == top_k:
                break
        return out

    # -- serialization ----------------------------------------------------

    def dumps(self, meta: Mapping[str, str] | None = None) -> str:
        lines = [f"{INDEX_MAGIC}\t{INDEX_VERSION}"]
        for key, value in sorted((meta or {}).items()):
            lines.append(f"meta\t{key}\t{value}")
        lines.append("params\t" + json.dumps(self.params.as_dict(), sort_keys=True))
        v = self.vocab
        lines.append(f"vocab\t{v.doc_count}\t{v.avgdl!r}\t{len(v)}")
        for term, i in v.term_ids.items():
            lines.append(f"T\t{term}\t{int(v.df[i])}\t{float(v.idf[i])!r}")
        lines.append(f"docs\t{len(self.docs)}")
        for d in self.docs:
            fields = [d.doc_id, str(d.unit_index), str(d.length)]
            for term in sorted(d.term_freqs):
                fields += [term, str(d.term_freqs[term])]
            lines.append("D\t" + "\t".join(fields))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path, meta: Mapping[str, str] | None = None) -> None:
        for d in self.docs:
            if "\t" in d.doc_id or "\n" in d.doc_id:
                raise FormatError(f"document id {d.doc_id!r} contains a tab or newline")
        atomic_write_text(path, self.dumps(meta))

    @classmethod
    def load(cls, path: str | Path) -> tuple[LexicalIndex, dict[str, str]]:
        """Read an index written by :meth:`save`; returns it with its metadata."""
        path = str(path)
        try:
            with open(path, encoding="utf-8") as fh:
                records = [line.split("\t") for line in fh.read().splitlines()]
        except OSError as exc:
            raise FormatError(f"cannot read index: {exc}", path) from exc
        if not records or records[0][0] != INDEX_MAGIC:
            raise FormatError("not an index file (bad magic header)", path, 1)
        if records[0][1:] != [str(INDEX_VERSION)]:
            raise FormatError(f"unsupported index version {records[0][1:]!r}", path, 1)

        pos = 1

        def take(tag: str) -> list[str]:
            nonlocal pos
            if pos >= len(records):
                raise FormatError(f"truncated index, expected {tag!r}", path, pos + 1)
            parts = records[pos]
            if parts[0] != tag:
                raise FormatError(f"expected {tag!r} record, got {parts[0]!r}", path, pos + 1)
            pos += 1
            return parts

        try:
            meta = {}
            while pos < len(records) and records[pos][0] == "meta":
                parts = take("meta")
                meta[parts[1]] = "\t".join(parts[2:])
            params = BM25Params(**json.loads(take("params")[1]))
            _, n_docs, avgdl, n_terms = take("vocab")
            term_ids, dfs, idfs = {}, [], []
            for i in range(int(n_terms)):
                _, term, df, idf_value = take("T")
                term_ids[term] = i
                dfs.append(int(df))
                idfs.append(float(idf_value))
            vocab = Vocabulary(term_ids, np.array(dfs, dtype=np.int64), int(n_docs), float(avgdl),
                               np.array(idfs, dtype=np.float64))
            docs = []
            for _ in range(int(take("docs")[1])):
                parts = take("D")
                pairs = parts[4:]
                if len(pairs) % 2:
                    raise FormatError("odd number of posting fields", path, pos)
                tf = {pairs[j]: int(pairs[j + 1]) for j in range(0, len(pairs), 2)}
                if any(t not in term_ids for t in tf):
                    raise FormatError("posting references a term outside the vocabulary", path, pos)
                docs.append(IndexedDoc(parts[1], int(parts[2]), tf, int(parts[3])))
        except FormatError:
            raise
        except (ValueError, IndexError, TypeError, ConfigError) as exc:
            raise FormatError(f"malformed index record: {exc}", path, pos) from exc
        return cls(params, vocab, docs), meta
