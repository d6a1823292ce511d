"""Exception types shared across the engine."""

from __future__ import annotations


class RagForgeError(Exception):
    """Base class for all engine errors."""


# --- ingest ---------------------------------------------------------------

class MalformedTable(RagForgeError):
    """Table markup has no usable rows/cells; caller should fall back to plain text."""


# --- corpus ---------------------------------------------------------------

class DuplicateChunkId(RagForgeError):
    pass


class DimensionMismatch(RagForgeError):
    pass


class ZeroVector(RagForgeError):
    pass


class StorageError(RagForgeError):
    """Corpus directory missing or unreadable/unwritable."""


class VersionMismatch(RagForgeError):
    """Persisted corpus was built with a different analyzer version."""


# --- model gateway --------------------------------------------------------

class TransportError(RagForgeError):
    """Endpoint unreachable or persistently failing after all retries."""


class RateLimited(TransportError):
    """429 responses exhausted the retry budget."""


class DimsInconsistent(RagForgeError):
    """Embedding endpoint returned the wrong number of vectors or ragged dims."""


class EmptyCompletion(RagForgeError):
    pass


# --- datagen --------------------------------------------------------------

class UnparseableCompletion(RagForgeError):
    """LLM output did not contain the expected numbered list."""


class CorpusTooSmall(RagForgeError):
    pass


# --- retrieve -------------------------------------------------------------

class EmptyStore(RagForgeError):
    pass


class EmptyValidationSet(RagForgeError):
    pass


class UnknownGoldId(RagForgeError):
    pass


class NoStrategyChosen(RagForgeError):
    pass


# --- answer / eval --------------------------------------------------------

class EmptyCorpus(RagForgeError):
    pass


class SchemaError(RagForgeError):
    """Dataset lines failed validation; message cites the offending line numbers."""


class MissingGoldChunks(RagForgeError):
    pass


# --- jobs -----------------------------------------------------------------

class JobConflict(RagForgeError):
    """A job of the same kind is already queued or running."""
