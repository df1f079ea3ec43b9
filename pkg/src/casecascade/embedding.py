"""Dense paragraph vectors and cosine similarity.

Two back-ends share one small interface (:class:`EmbeddingProvider`):

* :class:`AveragedNgramProvider` averages word (and word-bigram) vectors
  read from a word2vec text file, in the manner of Sent2Vec inference.
* :class:`PrecomputedProvider` looks vectors up in a TSV produced offline
  by any sentence encoder, keyed by ``(doc_id, unit_index)``.

Word2vec text format::

    <count> <dim>
    <term> <v1> ... <vdim>

Bigram terms join their two words with ``_``.

Paragraph TSV format, one record per line::

    <doc_id>\\t<unit_index>\\t<v1>\\t...\\t<vdim>
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from ._io import atomic_write_text
from .errors import FormatError, MissingEmbeddingError
from .lexical import tokenize


@dataclass(frozen=True)
class TextUnit:
    """A paragraph-like span of text addressed by document id and unit index."""

    doc_id: str
    unit_index: int
    text: str


@dataclass(frozen=True)
class WordVectorTable:
    dimension: int
    vectors: Mapping[str, np.ndarray]

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if not self.vectors:
            raise ValueError("word vector table is empty")
        for term, vec in self.vectors.items():
            if vec.shape != (self.dimension,):
                raise ValueError(f"vector for {term!r} has shape {vec.shape}, expected ({self.dimension},)")


@dataclass(frozen=True)
class ParagraphEmbeddingStore:
    dimension: int
    vectors: Mapping[tuple[str, int], np.ndarray]

    def __len__(self) -> int:
        return len(self.vectors)


def _parse_floats(values: Sequence[str], path: str, line_no: int) -> np.ndarray:
    try:
        return np.array([float(v) for v in values], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"non-numeric vector component ({exc})", path, line_no) from None


def load_word_vectors(path: str | Path) -> WordVectorTable:
    """Read a word2vec text-format file."""
    path = str(path)
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise FormatError("header must be '<count> <dim>'", path, 1)
        count, dim = int(header[0]), int(header[1])
        if dim <= 0:
            raise FormatError("dimension must be positive", path, 1)
        for line_no, line in enumerate(fh, 2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) != dim + 1:
                raise FormatError(f"expected a term and {dim} values, got {len(parts) - 1} values", path, line_no)
            if parts[0] in vectors:
                raise FormatError(f"duplicate term {parts[0]!r}", path, line_no)
            vectors[parts[0]] = _parse_floats(parts[1:], path, line_no)
    if len(vectors) != count:
        raise FormatError(f"header declares {count} vectors but file has {len(vectors)}", path)
    if not vectors:
        raise FormatError("no vectors in file", path)
    return WordVectorTable(dim, vectors)


def save_word_vectors(table: WordVectorTable, path: str | Path) -> None:
    lines = [f"{len(table.vectors)} {table.dimension}"]
    for term, vec in table.vectors.items():
        lines.append(term + " " + " ".join(repr(float(x)) for x in vec))
    atomic_write_text(path, "\n".join(lines) + "\n")


def embed_average(tokens: Sequence[str], table: WordVectorTable, use_bigrams: bool = True) -> np.ndarray:
    """Mean of the in-vocabulary unigram (and adjacent-bigram) vectors.

    Out-of-vocabulary items are skipped; if nothing is found the result is
    the zero vector.
    """
    found = [table.vectors[t] for t in tokens if t in table.vectors]
    if use_bigrams:
        found += [table.vectors[k] for k in (f"{a}_{b}" for a, b in zip(tokens, tokens[1:]))
                  if k in table.vectors]
    if not found:
        return np.zeros(table.dimension)
    return np.mean(found, axis=0)


def load_paragraph_embeddings(path: str | Path) -> ParagraphEmbeddingStore:
    path = str(path)
    vectors: dict[tuple[str, int], np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise FormatError("expected doc_id, unit_index and at least one value", path, line_no)
            try:
                key = (parts[0], int(parts[1]))
            except ValueError:
                raise FormatError(f"unit index {parts[1]!r} is not an integer", path, line_no) from None
            vec = _parse_floats(parts[2:], path, line_no)
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise FormatError(f"vector has {len(vec)} values, store dimension is {dim}", path, line_no)
            if key in vectors:
                raise FormatError(f"duplicate key (doc_id={key[0]!r}, unit_index={key[1]})", path, line_no)
            vectors[key] = vec
    if dim is None:
        raise FormatError("no records in file", path)
    return ParagraphEmbeddingStore(dim, vectors)


def save_paragraph_embeddings(rows: Iterable[tuple[str, int, np.ndarray]], path: str | Path) -> None:
    lines = []
    for doc_id, unit_index, vec in rows:
        lines.append("\t".join([doc_id, str(unit_index)] + [repr(float(x)) for x in vec]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between ``u`` and ``v``; 0.0 if either is a zero vector."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0 or nv == 0:
        return 0.0
    return max(-1.0, min(1.0, float(np.dot(u, v)) / (nu * nv)))


class EmbeddingProvider(Protocol):
    name: str
    dimension: int

    def embed(self, unit: TextUnit) -> np.ndarray: ...


class AveragedNgramProvider:
    """Averages word vectors over the lowercased word tokens of a unit."""

    name = "averaged-ngram"

    def __init__(self, table: WordVectorTable, use_bigrams: bool = True):
        self.table = table
        self.use_bigrams = use_bigrams
        self.dimension = table.dimension

    def embed(self, unit: TextUnit) -> np.ndarray:
        return embed_average(tokenize(unit.text), self.table, self.use_bigrams)


class PrecomputedProvider:
    name = "precomputed"

    def __init__(self, store: ParagraphEmbeddingStore):
        self.store = store
        self.dimension = store.dimension

    def embed(self, unit: TextUnit) -> np.ndarray:
        try:
            return self.store.vectors[(unit.doc_id, unit.unit_index)]
        except KeyError:
            raise MissingEmbeddingError(unit.doc_id, unit.unit_index) from None


def demo_word_vectors(terms: Iterable[str], dimension: int = 32, seed: int = 0) -> WordVectorTable:
    """Deterministic pseudo-random vectors, one per term.

    Each vector depends only on ``(seed, term)``, so tables built over
    different term lists agree on shared terms. Useful for hermetic tests
    and demos; carries no semantics.
    """
    vectors = {}
    for term in sorted(set(terms)):
        digest = hashlib.sha256(f"{seed}\x00{term}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        vectors[term] = rng.standard_normal(dimension)
    return WordVectorTable(dimension, vectors)
