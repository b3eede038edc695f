"""Exception types shared across the toolkit."""

from __future__ import annotations


class BenchlabError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(BenchlabError):
    """Inputs that must share image dimensions do not."""


class NoDataError(BenchlabError):
    """A statistic was requested on an empty collection."""


class ShortfallError(BenchlabError):
    """Fewer items are available than were requested.

    Carries the achievable count so callers can retry with a feasible
    request instead of parsing the message.
    """

    def __init__(self, requested: int, achievable: int, what: str = "items"):
        self.requested = requested
        self.achievable = achievable
        super().__init__(
            f"requested {requested} {what} but only {achievable} are available"
        )


class FormatError(BenchlabError):
    """Malformed external data.  ``offset`` is the byte position of the
    problem when it is known."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class SequencingError(BenchlabError):
    """A response arrived for a trial other than the session's next one."""


class DuplicateResponseError(SequencingError):
    """A response for an already-answered trial was submitted again."""


class SessionCompleteError(SequencingError):
    """A response was submitted to a session that already finished."""
