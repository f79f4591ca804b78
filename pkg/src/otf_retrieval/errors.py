"""Exception hierarchy shared across the package.

Everything raised on purpose derives from RetrievalError so callers can
catch one base type at API boundaries.
"""

from __future__ import annotations


class RetrievalError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(RetrievalError):
    """File does not look like the expected format (magic or version mismatch)."""


class CorruptionError(RetrievalError):
    """File has the right header but the payload is truncated or inconsistent."""


class EmptyStoreError(RetrievalError):
    """A feature store with zero rows or zero dimensions where data is required."""


class DegenerateInputError(RetrievalError):
    """Input vector has no usable direction (e.g. zero norm before normalization)."""


class ConfigError(RetrievalError):
    """A configuration value is out of its documented range."""


class InsufficientDataError(RetrievalError):
    """Not enough training data for the requested operation."""


class NotReadyError(RetrievalError):
    """Operation needs state that does not exist yet (no positives, no snapshot)."""


class SessionNotFoundError(RetrievalError):
    """Unknown or already evicted session id."""


class QueryResolutionError(RetrievalError):
    """Query text could not be resolved to a positive feature source."""


class SessionLimitError(RetrievalError):
    """Too many concurrent sessions."""
