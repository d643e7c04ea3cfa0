"""Exception hierarchy shared across the toolkit.

Callers that need to map failures onto process exit codes or HTTP status
codes catch these instead of bare ValueError/KeyError.
"""

from __future__ import annotations


class SpanactError(Exception):
    """Base class for all toolkit errors."""


class UsageError(SpanactError):
    """The caller invoked an operation incorrectly (bad arguments, bad flags)."""


class DataError(SpanactError):
    """An input file or record is malformed or references something unknown."""


class NotFoundError(SpanactError):
    """A referenced run or instance does not exist."""


class ValidationError(SpanactError):
    """A value is well-formed but violates a semantic invariant.

    Carries the individual violation messages so services can surface them.
    """

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class BackendError(SpanactError):
    """A chat backend failed in a way retries will not fix."""


class TransientBackendError(BackendError):
    """A chat backend failed in a way that may succeed on retry."""


class BackendTimeout(TransientBackendError):
    """A chat backend did not answer within the configured timeout."""
