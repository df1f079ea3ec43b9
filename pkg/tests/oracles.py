"""Brute-force reference implementations used to check the engine.

Nothing here imports the package's scoring code.
"""

from __future__ import annotations

import math
import re
from collections import Counter


def oracle_terms(tokens, lo, hi):
    out = []
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            out.append(" ".join(tokens[i:i + n]))
    return out


def oracle_bm25(corpus, query, k1, b, lo=1, hi=1, max_df=1.0):
    """Score every document of ``corpus`` (lists of tokens) for ``query`` (list of tokens).

    Implements the textbook formulas term by term; fractional ``max_df``
    keeps terms with df <= floor(max_df * N).
    """
    n = len(corpus)
    doc_terms = [oracle_terms(d, lo, hi) for d in corpus]
    avgdl = sum(len(d) for d in corpus) / n
    limit = math.floor(max_df * n + 1e-9) if isinstance(max_df, float) else max_df
    scores = []
    for d, terms in zip(corpus, doc_terms):
        total = 0.0
        for q in oracle_terms(query, lo, hi):
            df = sum(1 for other in doc_terms if q in other)
            if df == 0 or df > limit:
                continue
            f = terms.count(q)
            if f == 0:
                continue
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1)
            total += idf * (f * (k1 + 1) / (f + k1 * (1 - b + b * len(d) / avgdl)))
        scores.append(total)
    return scores


def oracle_ranking(ids, scores):
    return [i for _, i in sorted(zip(scores, ids), key=lambda x: (-x[0], x[1]))]


def brute_max(matrix):
    best, where = None, None
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            if best is None or v > best:
                best, where = v, (i, j)
    return best, where


def brute_cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0 or nv == 0:
        return 0.0
    return dot / (nu * nv)


def brute_recall(stage1, labels, k):
    hit = sum(len(set(stage1.get(q, [])[:k]) & set(rel)) for q, rel in labels.items())
    return hit / sum(len(rel) for rel in labels.values())


_WORD = re.compile(r"[^\W_]{2,}")


def oracle_tokens(text, stop=frozenset()):
    return [w for w in _WORD.findall(text.lower()) if w not in stop]


class OracleIndex:
    """Exhaustive BM25 over many units, with df counted once up front."""

    def __init__(self, units, k1, b, lo=1, hi=1, max_df=1.0, stop=frozenset()):
        self.ids = [u[0] for u in units]
        self.k1, self.b, self.lo, self.hi, self.stop = k1, b, lo, hi, stop
        tokens = [oracle_tokens(u[1], stop) for u in units]
        self.lengths = [len(t) for t in tokens]
        self.counts = [Counter(oracle_terms(t, lo, hi)) for t in tokens]
        self.n = len(units)
        self.avgdl = sum(self.lengths) / self.n
        df = Counter()
        for c in self.counts:
            df.update(c.keys())
        limit = math.floor(max_df * self.n + 1e-9) if isinstance(max_df, float) else max_df
        self.df = {t: d for t, d in df.items() if d <= limit}

    def scores(self, query_text):
        query = oracle_terms(oracle_tokens(query_text, self.stop), self.lo, self.hi)
        out = []
        for counts, length in zip(self.counts, self.lengths):
            total = 0.0
            norm = self.k1 * (1 - self.b + self.b * length / self.avgdl)
            for q in query:
                f = counts.get(q, 0)
                if f and q in self.df:
                    df = self.df[q]
                    idf = math.log((self.n - df + 0.5) / (df + 0.5) + 1)
                    total += idf * (f * (self.k1 + 1) / (f + norm))
            out.append(total)
        return out

    def rank_documents(self, query_text, exclude=None):
        best = {}
        for doc_id, s in zip(self.ids, self.scores(query_text)):
            if doc_id != exclude and (doc_id not in best or s > best[doc_id]):
                best[doc_id] = s
        return sorted(best.items(), key=lambda x: (-x[1], x[0]))
