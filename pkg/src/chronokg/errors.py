"""Exception hierarchy. ChronoError subclasses map to CLI exit code 1."""
from __future__ import annotations


class ChronoError(Exception):
    """Base class for input/contract errors."""


class MalformedRecord(ChronoError):
    """Record has an unparseable date or a negative measure."""


class SchemaMismatch(ChronoError):
    """CSV is missing a column required by the declared schema."""


class UnknownLocation(ChronoError):
    """Location id not present in the graph."""


class InvalidParams(ChronoError):
    """Generator or run parameters outside their legal range."""


class BudgetExceeded(ChronoError):
    """A run hit its retrieval triple budget; controllers fall back."""


class HorizonExhausted(ChronoError):
    """No candidate window remains within the search horizon."""


class InsufficientCoverage(ChronoError):
    """Graph does not cover duration + horizon around sampled anchors."""


class NoGoldLabel(ChronoError):
    """Item has no computable gold label."""


class EmptyEvidence(ChronoError):
    """Answer fusion called with no citable facts."""


class LengthMismatch(ChronoError):
    """Predictions and items do not align one-to-one."""


class ParseFailure(ChronoError):
    """Remote agent reply did not match the documented grammar."""


class NetworkError(ChronoError):
    """Remote agent endpoint unreachable or timed out."""


class RateLimited(ChronoError):
    """Remote endpoint rate limit persisted through backoff retries."""
