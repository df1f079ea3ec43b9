"""Case-law documents: loading, segmentation, citation contexts and statistics.

Query cases have their citations replaced by a fragment marker. The
sentences around each marker are the best available description of the
cited precedent, so they are pulled out as context blocks.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .errors import CorpusError
from .lexical import tokenize

logger = logging.getLogger(__name__)

FRAGMENT_MARKER = "FRAGMENT_SUPPRESSED"

# Tokens that end in a period without ending a sentence.
ABBREVIATIONS = frozenset(
    {"s.", "ss.", "v.", "No.", "Mr.", "Mrs.", "Dr.", "Inc.", "Ltd.", "cf.", "e.g.", "i.e.", "para."}
)

# groups: preceding word, terminator run, closers, first character of the next sentence
_TERMINATOR = re.compile(r"(\S*?)([.!?]+)([\"'”’)]*)(?=\s+(\S))")
_OPENERS = "([\"'“‘"
_BLANK_LINE = re.compile(r"\n[^\S\n]*\n\s*")
_NUMBERED_LINE = re.compile(r"\n(?=[^\S\n]*\[\d+\])")
_NUMBERING = re.compile(r"\[\d+\]")


@dataclass(frozen=True, slots=True)
class Sentence:
    paragraph_index: int
    index: int
    text: str


@dataclass(frozen=True, slots=True)
class Paragraph:
    doc_id: str
    index: int
    sentences: tuple[Sentence, ...]
    text: str


@dataclass(frozen=True)
class Document:
    id: str
    raw_text: str
    paragraphs: tuple[Paragraph, ...]

    def __post_init__(self):
        if not self.id:
            raise CorpusError("document id must be non-empty")

    @classmethod
    def from_text(cls, doc_id: str, text: str) -> Document:
        return cls(doc_id, text, tuple(segment_paragraphs(text, doc_id=doc_id)))

    @property
    def sentences(self) -> tuple[Sentence, ...]:
        """All sentences in reading order, across paragraph boundaries."""
        return tuple(s for p in self.paragraphs for s in p.sentences)


ContextBlock = tuple[Sentence, ...]


@dataclass(frozen=True)
class QueryCase:
    """A Task 1 query document together with its citation-context blocks."""

    id: str
    document: Document
    fragment_contexts: tuple[ContextBlock, ...]

    @classmethod
    def from_document(
        cls, doc: Document, before: int = 3, after: int = 3, marker: str = FRAGMENT_MARKER
    ) -> QueryCase:
        return cls(doc.id, doc, tuple(extract_fragment_contexts(doc, before, after, marker)))

    def block_texts(self) -> list[str]:
        return [" ".join(s.text for s in block) for block in self.fragment_contexts]


@dataclass(frozen=True, slots=True)
class PoolParagraph:
    """One candidate paragraph file of a Task 2 query."""

    name: str
    index: int
    text: str


@dataclass(frozen=True)
class EntailmentCase:
    """A Task 2 query: entailed fragment, its base case, and the candidate pool."""

    id: str
    fragment: str
    base_case: Document
    paragraphs: tuple[PoolParagraph, ...]


@dataclass(frozen=True)
class LabelSet:
    """Gold relevance: query id -> relevant candidate ids (or paragraph file names)."""

    relevant: Mapping[str, frozenset[str]]

    def __post_init__(self):
        for qid, items in self.relevant.items():
            if not items:
                raise CorpusError(f"query {qid!r} has an empty relevant set")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Sequence[str]]) -> LabelSet:
        return cls({str(q): frozenset(str(c) for c in cs) for q, cs in data.items()})

    @classmethod
    def load(cls, path: str | Path) -> LabelSet:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CorpusError(f"cannot read labels {path}: {exc}") from exc
        if not isinstance(data, dict) or not all(isinstance(v, list) for v in data.values()):
            raise CorpusError(f"labels {path}: expected an object of query id -> list of ids")
        return cls.from_mapping(data)

    def __getitem__(self, qid: str) -> frozenset[str]:
        return self.relevant[qid]

    def __contains__(self, qid: object) -> bool:
        return qid in self.relevant

    def __iter__(self):
        return iter(self.relevant)

    def __len__(self) -> int:
        return len(self.relevant)

    def get(self, qid: str) -> frozenset[str]:
        return self.relevant.get(qid, frozenset())


@dataclass(frozen=True)
class CorpusStats:
    query_count: int
    candidate_count: int
    avg_relevant: float
    avg_query_words: float
    avg_candidate_words: float
    avg_candidate_paragraphs_per_query: float | None = None

    def rows(self) -> list[tuple[str, str]]:
        """Rows in the order of the usual dataset-statistics table."""
        out = [
            ("# of queries", f"{self.query_count:,}"),
            ("# of candidate cases/paragraphs", f"{self.candidate_count:,}"),
        ]
        if self.avg_candidate_paragraphs_per_query is not None:
            out.append(("avg # of candidate paragraphs per query", f"{self.avg_candidate_paragraphs_per_query:.3f}"))
        out += [
            ("avg # of relevant candidates/paragraphs", f"{self.avg_relevant:.3f}"),
            ("avg query length (words)", f"{self.avg_query_words:,.2f}"),
            ("avg candidate length (words)", f"{self.avg_candidate_words:,.2f}"),
        ]
        return out


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for m in _TERMINATOR.finditer(text):
        word, stops, _, nxt = m.groups()
        if not (nxt.isupper() or nxt == "["):
            continue
        if stops == "." and (word + ".").lstrip(_OPENERS) in ABBREVIATIONS:
            continue
        spans.append((start, m.end()))
        start = m.end()
    spans.append((start, len(text)))
    return spans


def segment_sentences(text: str, paragraph_index: int = 0) -> list[Sentence]:
    """Split ``text`` into trimmed, non-empty sentences.

    A boundary follows ``.``, ``!`` or ``?`` (plus any closing quotes or
    parenthesis) when whitespace and then an uppercase letter or ``[``
    come next, unless the word ending there is a known abbreviation.
    """
    out = []
    for start, end in _sentence_spans(text):
        piece = text[start:end].strip()
        if piece:
            out.append(Sentence(paragraph_index, len(out), piece))
    return out


def _split_numbered(block: str) -> list[str]:
    # paragraph numbering at a sentence start opens a new paragraph
    chunks: list[str] = []
    for part in _NUMBERED_LINE.split(block):
        current: list[str] = []
        spans = _sentence_spans(part)
        for start, end in spans:
            piece = part[start:end]
            if current and _NUMBERING.match(piece.lstrip()):
                chunks.append("".join(current))
                current = []
            current.append(piece)
        chunks.append("".join(current))
    return chunks


def segment_paragraphs(text: str, doc_id: str = "") -> list[Paragraph]:
    """Split ``text`` into paragraphs at blank lines and at ``[n]`` numbering."""
    out: list[Paragraph] = []
    for block in _BLANK_LINE.split(text):
        for chunk in _split_numbered(block):
            chunk = chunk.strip()
            if not chunk:
                continue
            idx = len(out)
            out.append(Paragraph(doc_id, idx, tuple(segment_sentences(chunk, idx)), chunk))
    return out


def extract_fragment_contexts(
    doc: Document, before: int, after: int, marker: str = FRAGMENT_MARKER
) -> list[ContextBlock]:
    """One block of sentences ``[i - before, i + after]`` per marker sentence ``i``.

    Windows are clamped to the document and overlapping windows are kept
    as separate blocks.
    """
    if before < 0 or after < 0:
        raise ValueError("before and after must be non-negative")
    sentences = doc.sentences
    last = len(sentences) - 1
    blocks = []
    for i, sentence in enumerate(sentences):
        if marker in sentence.text:
            blocks.append(sentences[max(0, i - before):min(last, i + after) + 1])
    return blocks


def _word_count(text: str) -> int:
    return len(tokenize(text))


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def compute_stats(
    queries: Sequence[Document | QueryCase | EntailmentCase],
    candidates: Sequence[Document] | Mapping[str, Sequence[PoolParagraph]] | None,
    labels: LabelSet,
) -> CorpusStats:
    """Dataset statistics for a Task 1 corpus or a set of Task 2 queries.

    For Task 2 pass :class:`EntailmentCase` objects; ``candidates`` may then
    be ``None`` (pools are read from the cases) or a mapping of query id to
    pool. Query length for Task 2 is the length of the base case.
    """
    query_ids = [q.id for q in queries]
    if len(set(query_ids)) != len(query_ids):
        raise CorpusError("duplicate query ids")
    task2 = bool(queries) and isinstance(queries[0], EntailmentCase)

    if task2:
        pools = candidates if isinstance(candidates, Mapping) else {q.id: q.paragraphs for q in queries}
        query_words = [_word_count(q.base_case.raw_text) for q in queries]
        cand_words = [_word_count(p.text) for q in queries for p in pools[q.id]]
        known = {q.id: {p.name for p in pools[q.id]} for q in queries}
        candidate_count = len(cand_words)
    else:
        if isinstance(candidates, Mapping) or candidates is None:
            raise CorpusError("Task 1 statistics need a sequence of candidate documents")
        query_words = [_word_count((q.document if isinstance(q, QueryCase) else q).raw_text) for q in queries]
        cand_words = [_word_count(c.raw_text) for c in candidates]
        cand_ids = {c.id for c in candidates}
        known = {qid: cand_ids for qid in query_ids}
        candidate_count = len(candidates)

    for qid in labels:
        if qid not in known:
            raise CorpusError(f"labels reference unknown query id {qid!r}")
        for cid in sorted(labels[qid]):
            if cid not in known[qid]:
                raise CorpusError(f"labels for query {qid!r} reference unknown candidate {cid!r}")

    return CorpusStats(
        query_count=len(queries),
        candidate_count=candidate_count,
        avg_relevant=_mean([len(labels[q]) for q in labels]),
        avg_query_words=_mean(query_words),
        avg_candidate_words=_mean(cand_words),
        avg_candidate_paragraphs_per_query=(
            _mean([len(known[q]) for q in query_ids]) if task2 else None
        ),
    )


# -- loading ---------------------------------------------------------------


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc


def load_documents(directory: str | Path) -> list[Document]:
    """Load every ``<case_id>.txt`` file in ``directory``, sorted by id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise CorpusError(f"not a directory: {directory}")
    return [Document.from_text(p.stem, _read(p)) for p in sorted(directory.glob("*.txt"))]


def load_task1(
    root: str | Path | None = None,
    *,
    queries_dir: str | Path | None = None,
    candidates_dir: str | Path | None = None,
) -> tuple[list[Document], list[Document]]:
    """Load ``root/queries`` and ``root/candidates`` (either may be overridden)."""
    if root is not None:
        root = Path(root)
        queries_dir = queries_dir or root / "queries"
        candidates_dir = candidates_dir or root / "candidates"
    if queries_dir is None or candidates_dir is None:
        raise CorpusError("need a corpus root or both query and candidate directories")
    queries = load_documents(queries_dir)
    candidates = load_documents(candidates_dir)
    if not candidates:
        raise CorpusError(f"no candidate documents in {candidates_dir}")
    return queries, candidates


def _pool_sort_key(path: Path):
    return (0, int(path.stem), path.name) if path.stem.isdigit() else (1, 0, path.name)


def load_task2(root: str | Path) -> list[EntailmentCase]:
    """Load ``root/<query_id>/{entailed_fragment.txt, base_case.txt, paragraphs/*.txt}``."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"not a directory: {root}")
    cases = []
    for qdir in sorted(p for p in root.iterdir() if p.is_dir()):
        fragment = _read(qdir / "entailed_fragment.txt")
        base = Document.from_text(qdir.name, _read(qdir / "base_case.txt"))
        files = sorted((qdir / "paragraphs").glob("*.txt"), key=_pool_sort_key)
        pool = tuple(PoolParagraph(p.name, i, _read(p)) for i, p in enumerate(files))
        cases.append(EntailmentCase(qdir.name, fragment, base, pool))
    return cases
