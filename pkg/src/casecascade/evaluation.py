"""Micro-averaged precision, recall and F-measure.

Counts are pooled over all queries before dividing::

    precision = correct / retrieved
    recall    = correct / relevant
    f1        = 2 * precision * recall / (precision + recall)

with 0 wherever a denominator is 0.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from fractions import Fraction

from .corpus import LabelSet
from .errors import CorpusError
from .runs import RunResult

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class QueryCounts:
    correct: int
    retrieved: int
    relevant: int


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    correct: int
    retrieved: int
    relevant: int
    per_query: Mapping[str, QueryCounts]

    def as_dict(self, places: int = 4) -> dict:
        return {
            "precision": round(self.precision, places),
            "recall": round(self.recall, places),
            "f1": round(self.f1, places),
            "correct": self.correct,
            "retrieved": self.retrieved,
            "relevant": self.relevant,
            "queries": len(self.per_query),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def prf(correct, retrieved, relevant):
    """Precision, recall and F1 from raw counts.

    Works on ints (returns floats) and on :class:`fractions.Fraction`
    inputs (returns exact fractions), which the tests use as a cross-check.
    """
    exact = any(isinstance(x, Fraction) for x in (correct, retrieved, relevant))
    zero = Fraction(0) if exact else 0.0
    p = correct / retrieved if retrieved else zero
    r = correct / relevant if relevant else zero
    f = 2 * p * r / (p + r) if p + r else zero
    if not exact:
        p, r, f = float(p), float(r), float(f)
    return p, r, f


def evaluate(run: RunResult | Mapping[str, Iterable[str]], labels: LabelSet) -> EvalReport:
    """Score ``run`` against ``labels``.

    Every query id in the run must be labelled. Labelled queries missing
    from the run still add their relevant items to the recall denominator.
    Duplicate predictions within one query are counted once.
    """
    lists = run.as_id_lists() if isinstance(run, RunResult) else {q: list(v) for q, v in run.items()}
    for qid in lists:
        if qid not in labels:
            raise CorpusError(f"run contains query {qid!r} which has no labels")
    per_query = {}
    for qid in sorted(set(lists) | set(labels)):
        predicted = lists.get(qid, [])
        unique = set(predicted)
        if len(unique) != len(predicted):
            logger.warning("query %s: %d duplicate predictions ignored", qid, len(predicted) - len(unique))
        gold = labels.get(qid)
        per_query[qid] = QueryCounts(len(unique & gold), len(unique), len(gold))
    correct = sum(c.correct for c in per_query.values())
    retrieved = sum(c.retrieved for c in per_query.values())
    relevant = sum(c.relevant for c in per_query.values())
    p, r, f = prf(correct, retrieved, relevant)
    return EvalReport(p, r, f, correct, retrieved, relevant, per_query)


def macro_average(report: EvalReport) -> tuple[float, float, float]:
    """Mean of per-query P/R/F1. A diagnostic only; headline numbers are micro."""
    rows = [prf(c.correct, c.retrieved, c.relevant) for c in report.per_query.values()]
    if not rows:
        return 0.0, 0.0, 0.0
    n = len(rows)
    return tuple(sum(r[i] for r in rows) / n for i in range(3))


def per_query_table(report: EvalReport) -> str:
    header = f"{'query':<20} {'correct':>7} {'retr':>5} {'rel':>5} {'P':>7} {'R':>7} {'F1':>7}"
    lines = [header, "-" * len(header)]
    for qid in sorted(report.per_query):
        c = report.per_query[qid]
        p, r, f = prf(c.correct, c.retrieved, c.relevant)
        lines.append(f"{qid:<20} {c.correct:>7} {c.retrieved:>5} {c.relevant:>5} {p:>7.4f} {r:>7.4f} {f:>7.4f}")
    lines.append("-" * len(header))
    lines.append(
        f"{'TOTAL (micro)':<20} {report.correct:>7} {report.retrieved:>5} {report.relevant:>5} "
        f"{report.precision:>7.4f} {report.recall:>7.4f} {report.f1:>7.4f}"
    )
    return "\n".join(lines) + "\n"
