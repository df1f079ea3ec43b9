"""Paragraph-pair similarity matrices, max-pooling and top-k selection."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

# above this many cells the matrix is never materialized
DEFAULT_MATRIX_CAP = 4_000_000


@dataclass(frozen=True)
class SimilarityMatrix:
    query_id: str
    candidate_id: str
    values: np.ndarray  # rows: query units, columns: candidate units

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, slots=True)
class DocScore:
    candidate_id: str
    score: float
    argmax_pair: tuple[int, int]


def _unit_rows(units: Sequence[np.ndarray] | np.ndarray, side: str) -> np.ndarray:
    arr = np.asarray(units, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"{side} side must be a non-empty sequence of equal-length vectors")
    norms = np.linalg.norm(arr, axis=1)
    safe = np.where(norms == 0, 1.0, norms)
    # zero vectors stay zero, so their cosine with anything is 0
    return arr / safe[:, None]


def _prepare(query_units, cand_units) -> tuple[np.ndarray, np.ndarray]:
    q = _unit_rows(query_units, "query")
    c = _unit_rows(cand_units, "candidate")
    if q.shape[1] != c.shape[1]:
        raise ValueError(f"dimension mismatch: query {q.shape[1]} vs candidate {c.shape[1]}")
    return q, c


def _row(q_row: np.ndarray, c: np.ndarray) -> np.ndarray:
    # both the dense and streaming paths go through here so values agree bit for bit
    return np.clip(c @ q_row, -1.0, 1.0)


def pair_matrix(query_units, cand_units, query_id: str = "", candidate_id: str = "") -> SimilarityMatrix:
    """Cosine similarity of every (query unit, candidate unit) pair."""
    q, c = _prepare(query_units, cand_units)
    values = np.vstack([_row(q[i], c) for i in range(q.shape[0])])
    return SimilarityMatrix(query_id, candidate_id, values)


def max_pool(matrix: SimilarityMatrix) -> DocScore:
    """Global maximum of the matrix; ties go to the first cell in row-major order."""
    values = matrix.values
    if values.size == 0:
        raise ValueError("cannot pool an empty matrix")
    flat = int(np.argmax(values))
    row, col = divmod(flat, values.shape[1])
    return DocScore(matrix.candidate_id, float(values[row, col]), (row, col))


def streaming_max_pool(query_units, cand_units, candidate_id: str = "") -> DocScore:
    """Same result as ``max_pool(pair_matrix(...))`` holding one row at a time."""
    q, c = _prepare(query_units, cand_units)
    best, best_pair = -np.inf, (0, 0)
    for i in range(q.shape[0]):
        row = _row(q[i], c)
        j = int(np.argmax(row))
        if row[j] > best:
            best, best_pair = row[j], (i, j)
    return DocScore(candidate_id, float(best), best_pair)


def score_candidate(query_units, cand_units, candidate_id: str = "", query_id: str = "",
                    cap: int = DEFAULT_MATRIX_CAP) -> DocScore:
    """Max-pooled document score, materializing the matrix only below ``cap`` cells."""
    if len(query_units) * len(cand_units) <= cap:
        return max_pool(pair_matrix(query_units, cand_units, query_id, candidate_id))
    return streaming_max_pool(query_units, cand_units, candidate_id)


def top_k(scores: Iterable[DocScore], k: int) -> list[DocScore]:
    """Best ``k`` scores, descending, ties broken by ascending candidate id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sorted(scores, key=lambda s: (-s.score, s.candidate_id))[:k]


def diagnostics_tsv(scores: Iterable[DocScore]) -> str:
    lines = ["candidate_id\tscore\targmax_row\targmax_col"]
    for s in scores:
        lines.append(f"{s.candidate_id}\t{s.score:.6f}\t{s.argmax_pair[0]}\t{s.argmax_pair[1]}")
    return "\n".join(lines) + "\n"
