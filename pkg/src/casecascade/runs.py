"""Ranked predictions per query, and the TSV run-file format.

One line per prediction::

    query_id<TAB>candidate_id[<TAB>paragraph_index]<TAB>rank<TAB>score<TAB>run_tag

Scores are written with six decimals. Lines starting with ``#`` carry the
resolved configuration that produced the run.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from ._io import atomic_write_text
from .errors import FormatError


@dataclass(frozen=True, slots=True)
class Prediction:
    candidate_id: str
    score: float
    paragraph_index: int | None = None


@dataclass
class RunResult:
    run_tag: str
    predictions: dict[str, list[Prediction]]
    # stage-1 candidate lists (id, BM25 score) before any re-ranking; not serialized
    stage1: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    # stage-2 DocScores per query, kept for the diagnostics dump; not serialized
    rerank: dict[str, list] = field(default_factory=dict)

    def candidate_ids(self, qid: str) -> list[str]:
        return [p.candidate_id for p in self.predictions.get(qid, [])]

    def as_id_lists(self) -> dict[str, list[str]]:
        return {q: self.candidate_ids(q) for q in self.predictions}


def format_run(run: RunResult, header: Sequence[str] = ()) -> str:
    lines = [f"# {h}" for h in header]
    for qid in sorted(run.predictions):
        for rank, p in enumerate(run.predictions[qid], 1):
            fields = [qid, p.candidate_id]
            if p.paragraph_index is not None:
                fields.append(str(p.paragraph_index))
            fields += [str(rank), f"{p.score:.6f}", run.run_tag]
            lines.append("\t".join(fields))
    return "\n".join(lines) + "\n" if lines else ""


def write_run(run: RunResult, path: str | Path, header: Sequence[str] = ()) -> None:
    atomic_write_text(path, format_run(run, header))


def read_run(path: str | Path) -> tuple[RunResult, list[str]]:
    """Parse a run file; returns the run and its ``#`` header lines (without ``# ``)."""
    path = str(path)
    header: list[str] = []
    predictions: dict[str, list[tuple[int, Prediction]]] = {}
    tags = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                header.append(line[1:].strip())
                continue
            parts = line.split("\t")
            try:
                if len(parts) == 5:
                    qid, cid, rank, score, tag = parts
                    para = None
                elif len(parts) == 6:
                    qid, cid, para_s, rank, score, tag = parts
                    para = int(para_s)
                else:
                    raise FormatError(f"expected 5 or 6 tab-separated fields, got {len(parts)}", path, line_no)
                predictions.setdefault(qid, []).append((int(rank), Prediction(cid, float(score), para)))
            except ValueError as exc:
                if isinstance(exc, FormatError):
                    raise
                raise FormatError(f"bad numeric field: {exc}", path, line_no) from None
            tags.add(tag)
    run_tag = tags.pop() if len(tags) == 1 else ",".join(sorted(tags))
    ordered = {q: [p for _, p in sorted(ps, key=lambda x: x[0])] for q, ps in predictions.items()}
    return RunResult(run_tag, ordered), header


def from_id_lists(run_tag: str, lists: Mapping[str, Iterable[str]]) -> RunResult:
    """Build a run from plain id lists; scores count down from the list length."""
    preds = {}
    for qid, ids in lists.items():
        ids = list(ids)
        preds[qid] = [Prediction(c, float(len(ids) - i)) for i, c in enumerate(ids)]
    return RunResult(run_tag, preds)
