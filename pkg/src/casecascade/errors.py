"""Exception types raised by the package.

The CLI maps every :class:`CascadeError` to exit code 1 (user error);
anything else escaping a command is treated as an internal failure.
"""

from __future__ import annotations


class CascadeError(Exception):
    """Base class for expected, user-facing failures."""


class CorpusError(CascadeError, ValueError):
    """Corpus or label data is missing, malformed or inconsistent."""


class FormatError(CascadeError, ValueError):
    """A serialized file (vectors, index, run) does not match its format."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConfigError(CascadeError, ValueError):
    """Invalid pipeline parameters, presets or overrides."""


class MissingEmbeddingError(CascadeError, LookupError):
    """A text unit needed for re-ranking has no vector."""

    def __init__(self, doc_id: str, unit_index: int):
        super().__init__(f"no embedding for (doc_id={doc_id!r}, unit_index={unit_index})")
        self.doc_id = doc_id
        self.unit_index = unit_index


class EmptyVocabularyError(ConfigError):
    """No term survives the n-gram and document-frequency filters."""
