"""Two-stage case-law retrieval: BM25 candidate generation, embedding re-ranking,
and micro-averaged evaluation."""

from .cascade import PRESETS, PipelineConfig, QueryMode, recall_at_k, run_task1, run_task2
from .corpus import Document, EntailmentCase, LabelSet, QueryCase, compute_stats
from .evaluation import EvalReport, evaluate
from .lexical import BM25Params, LexicalIndex, bm25_score
from .runs import Prediction, RunResult

__version__ = "0.1.0"

__all__ = [
    "PRESETS",
    "BM25Params",
    "Document",
    "EntailmentCase",
    "EvalReport",
    "LabelSet",
    "LexicalIndex",
    "PipelineConfig",
    "Prediction",
    "QueryCase",
    "QueryMode",
    "RunResult",
    "bm25_score",
    "compute_stats",
    "evaluate",
    "recall_at_k",
    "run_task1",
    "run_task2",
]
