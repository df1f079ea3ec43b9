"""Seeded synthetic corpora in the shape of the case-law tasks.

Real competition data is licence-restricted, so tests and demos run on
generated text. Filler words are pseudo-words built from syllables (never
stopwords); relevance is planted through rare tokens that appear only in
a query and in its relevant candidates.

Task 1: each query cites its relevant cases through a
``FRAGMENT_SUPPRESSED`` sentence that carries a query-specific 6-word
phrase; every relevant case contains the same phrase in one paragraph.
With ``hard_fraction > 0`` some relevant cases are left without the
phrase, so stage-1 recall is below 1.

Task 2: the entailed fragment contains query-specific rare words, the gold
paragraph(s) repeat most of them, and the base case contains the fragment
verbatim so base-window queries can find it.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import FRAGMENT_MARKER, Document, EntailmentCase, LabelSet, PoolParagraph
from .embedding import EmbeddingProvider, TextUnit, save_paragraph_embeddings

_ONSETS = "b d f g k l m n p r s t v z".split()
_VOWELS = "a e i o u".split()


def lexicon(size: int, rng: np.random.Generator) -> list[str]:
    words: set[str] = set()
    while len(words) < size:
        n = int(rng.integers(2, 4))
        words.add("".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(n)))
    return sorted(words)


def _sentence(rng: np.random.Generator, words: Sequence[str], inserts: Sequence[str] = (),
              length: tuple[int, int] = (8, 14)) -> str:
    n = int(rng.integers(*length))
    body = [str(w) for w in rng.choice(words, size=n)]
    if inserts:
        at = int(rng.integers(1, n))
        body[at:at] = list(inserts)
    body[0] = body[0].capitalize()
    return " ".join(body) + "."


@dataclass
class Task1Corpus:
    queries: list[Document]
    candidates: list[Document]
    labels: LabelSet
    phrases: dict[str, list[str]]


def make_task1_corpus(
    n_queries: int = 20,
    n_candidates: int = 150,
    *,
    seed: int = 0,
    lexicon_size: int = 2000,
    max_relevant: int = 5,
    paragraphs: tuple[int, int] = (3, 6),
    hard_fraction: float = 0.0,
    marker: str = FRAGMENT_MARKER,
) -> Task1Corpus:
    rng = np.random.default_rng(seed)
    words = np.array(lexicon(lexicon_size, rng))
    cand_ids = [f"{i:06d}" for i in range(n_candidates)]
    order = [str(c) for c in rng.permutation(cand_ids)]
    if n_queries * max_relevant > n_candidates:
        raise ValueError("not enough candidates for disjoint relevant sets")

    relevant: dict[str, list[str]] = {}
    phrases: dict[str, list[str]] = {}
    cursor = 0
    planted: dict[str, list[str]] = {}
    for qi in range(n_queries):
        qid = f"q{qi:05d}"
        k = int(rng.integers(1, max_relevant + 1))
        relevant[qid] = sorted(order[cursor:cursor + k])
        cursor += k
        phrases[qid] = [f"xq{qi}w{j}" for j in range(6)]
        for cid in relevant[qid]:
            if rng.random() >= hard_fraction:
                planted[cid] = phrases[qid]

    def paragraphs_text(inserts_at: dict[int, list[str]], n_par: int) -> str:
        blocks = []
        for p in range(n_par):
            n_sent = int(rng.integers(2, 5))
            sents = [_sentence(rng, words) for _ in range(n_sent)]
            if p in inserts_at:
                sents[int(rng.integers(0, n_sent))] = _sentence(rng, words, inserts_at[p])
            blocks.append(f"[{p + 1}] " + " ".join(sents))
        return "\n\n".join(blocks)

    candidates = []
    for cid in cand_ids:
        n_par = int(rng.integers(*paragraphs))
        inserts = {int(rng.integers(0, n_par)): planted[cid]} if cid in planted else {}
        candidates.append(Document.from_text(cid, paragraphs_text(inserts, n_par)))

    queries = []
    for qid in relevant:
        n_par = int(rng.integers(*paragraphs))
        target = int(rng.integers(0, n_par))
        inserts = {target: phrases[qid] + [marker]}
        queries.append(Document.from_text(qid, paragraphs_text(inserts, n_par)))
    return Task1Corpus(queries, candidates, LabelSet.from_mapping(relevant), phrases)


def make_task2_cases(
    n_queries: int = 40,
    pool_size: tuple[int, int] = (20, 40),
    *,
    seed: int = 0,
    lexicon_size: int = 1500,
    two_gold_every: int = 5,
) -> tuple[list[EntailmentCase], LabelSet]:
    """Entailment queries; every ``two_gold_every``-th query has two gold paragraphs.

    The first gold paragraph repeats all of the fragment's rare words, the
    second only half of them, so the first is the unique lexical best match
    and the second ranks next.
    """
    rng = np.random.default_rng(seed)
    words = np.array(lexicon(lexicon_size, rng))
    cases, labels = [], {}
    for qi in range(n_queries):
        qid = f"{qi:03d}"
        rare = [f"zr{qi}k{j}" for j in range(6)]
        fragment = _sentence(rng, words, rare)
        n_pool = int(rng.integers(*pool_size))
        n_gold = 2 if two_gold_every and qi % two_gold_every == two_gold_every - 1 else 1
        gold_idx = sorted(int(i) for i in rng.choice(n_pool, size=n_gold, replace=False))
        pool = []
        for i in range(n_pool):
            sents = [_sentence(rng, words) for _ in range(int(rng.integers(2, 5)))]
            if i == gold_idx[0]:
                sents.insert(1, _sentence(rng, words, rare))
            elif n_gold == 2 and i == gold_idx[1]:
                sents.insert(1, _sentence(rng, words, rare[:3]))
            pool.append(PoolParagraph(f"{i + 1:03d}.txt", i, " ".join(sents)))
        base_sents = [_sentence(rng, words) for _ in range(int(rng.integers(12, 25)))]
        base_sents.insert(int(rng.integers(0, len(base_sents))), fragment)
        base = Document.from_text(qid, " ".join(base_sents))
        cases.append(EntailmentCase(qid, fragment, base, tuple(pool)))
        labels[qid] = [pool[i].name for i in gold_idx]
    return cases, LabelSet.from_mapping(labels)


# -- on-disk layouts -------------------------------------------------------


def _write_labels(path: Path, labels: LabelSet) -> None:
    data = {q: sorted(labels[q]) for q in sorted(labels)}
    path.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def write_task1_corpus(root: str | Path, corpus: Task1Corpus) -> Path:
    """Write ``root/{queries,candidates}/<id>.txt`` and ``root/labels.json``."""
    root = Path(root)
    for sub, docs in (("queries", corpus.queries), ("candidates", corpus.candidates)):
        d = root / sub
        d.mkdir(parents=True, exist_ok=True)
        for doc in docs:
            (d / f"{doc.id}.txt").write_text(doc.raw_text, encoding="utf-8")
    _write_labels(root / "labels.json", corpus.labels)
    return root


def write_task2_corpus(root: str | Path, cases: Sequence[EntailmentCase], labels: LabelSet) -> Path:
    """Write ``root/<qid>/{entailed_fragment.txt, base_case.txt, paragraphs/}`` and ``root/labels.json``."""
    root = Path(root)
    for case in cases:
        qdir = root / case.id
        (qdir / "paragraphs").mkdir(parents=True, exist_ok=True)
        (qdir / "entailed_fragment.txt").write_text(case.fragment, encoding="utf-8")
        (qdir / "base_case.txt").write_text(case.base_case.raw_text, encoding="utf-8")
        for p in case.paragraphs:
            (qdir / "paragraphs" / p.name).write_text(p.text, encoding="utf-8")
    root.mkdir(parents=True, exist_ok=True)
    _write_labels(root / "labels.json", labels)
    return root


def write_precomputed_embeddings(path: str | Path, units: Sequence[TextUnit], provider: EmbeddingProvider) -> None:
    """Embed ``units`` with ``provider`` and store them in the paragraph TSV format."""
    save_paragraph_embeddings(((u.doc_id, u.unit_index, provider.embed(u)) for u in units), path)
