"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class ClusterLinkError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ClusterLinkError):
    """A malformed input row, reported with its file and line number."""

    def __init__(self, path, line: int | None, message: str) -> None:
        self.path = str(path)
        self.line = line
        self.message = message
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class ConflictError(ClusterLinkError):
    """Two records claim the same identifier."""

    def __init__(self, key: str, message: str | None = None) -> None:
        self.key = key
        super().__init__(message or f"duplicate id {key!r}")


class DocumentError(ClusterLinkError):
    """A document-level consistency problem (e.g. a span outside the text)."""

    def __init__(self, doc_id: str, message: str) -> None:
        self.doc_id = doc_id
        super().__init__(f"document {doc_id}: {message}")


class OverlapError(ClusterLinkError):
    """Overlapping mentions where the operation requires a flat segmentation."""


class MissingScoreError(ClusterLinkError, KeyError):
    """A scorer was asked for a pair it has no score for."""

    def __init__(self, kind: str, src: str, dst: str) -> None:
        self.kind = kind
        self.pair = (src, dst)
        super().__init__(f"no {kind} score for pair ({src}, {dst})")

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return self.args[0]


class ScoreRangeError(ClusterLinkError, ValueError):
    """A score outside the open unit interval."""


class TrainingError(ClusterLinkError):
    """Training diverged (non-finite loss or parameters)."""


class MissingPredictionError(ClusterLinkError):
    """A gold mention has no prediction row."""


class InvariantError(ClusterLinkError):
    """A structural invariant of an evaluation or clustering run failed."""


class ConfigError(ClusterLinkError):
    """Invalid pipeline configuration or missing artifact."""
