"""Exception types shared across the package."""

from __future__ import annotations

from typing import Optional


class PairRankError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PairRankError):
    """An input violates a documented precondition or invariant."""


class NotFoundError(PairRankError):
    """A referenced id (proposal, cycle, embedding) is unknown."""


class ManifestError(PairRankError):
    """A corpus manifest is missing, malformed, or inconsistent."""


class VerdictParseError(PairRankError):
    """A judge reply could not be parsed into a verdict.

    Carries the raw reply so retry logging can record what the model said.
    """

    def __init__(self, message: str, raw_reply: str = "") -> None:
        super().__init__(message)
        self.raw_reply = raw_reply


class TransportError(PairRankError):
    """HTTP transport to a remote backend failed."""

    def __init__(self, message: str, status: Optional[int] = None) -> None:
        super().__init__(message)
        self.status = status


class JudgeUnavailableError(PairRankError):
    """All retries for a judged pair were exhausted."""


class CacheIntegrityError(PairRankError):
    """A result cache file is corrupt or inconsistent with the configuration."""


class UndefinedMetricError(PairRankError):
    """A statistic is undefined for the given inputs (e.g. zero variance)."""
