"""Exception hierarchy shared by every engine module.

Every error carries a stable machine-readable ``code`` so that callers
(CLI, bindings) can map failures without parsing messages.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""

    code = "ENGINE_ERROR"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        for key, value in context.items():
            setattr(self, key, value)


class EpisodeParseError(EngineError):
    """Episode source is not well-formed JSON. Carries ``line``/``column``."""

    code = "SYNTAX_ERROR"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message, line=line, column=column)


class EpisodeSchemaError(EngineError):
    """Episode JSON parsed but violates the episode schema.

    ``code`` is ``MISSING_FIELD`` or ``TYPE_MISMATCH``; ``field`` is the
    dotted path of the offending entry.
    """

    def __init__(self, code: str, field: str, message: str | None = None):
        self.code = code
        super().__init__(message or f"{code} at {field}", field=field)


class SpecParseError(EngineError):
    """RTML text rejected. ``code`` is one of SYNTAX_ERROR, UNKNOWN_FIELD,
    TYPE_MISMATCH, MISSING_FIELD, ANCHOR_ALIAS, MULTI_DOCUMENT; ``path`` is
    the dotted document path where known."""

    def __init__(
        self,
        code: str,
        message: str,
        path: str | None = None,
        line: int | None = None,
        column: int | None = None,
    ):
        self.code = code
        super().__init__(message, path=path, line=line, column=column)


class DegenerateOrientationError(EngineError):
    code = "DEGENERATE_ORIENTATION"


class InsufficientFramesError(EngineError):
    code = "INSUFFICIENT_FRAMES"


class EpisodeInvalidError(EngineError):
    """Raised when an operation requires a validated episode. Carries the
    list of validation findings under ``findings``."""

    code = "EPISODE_INVALID"

    def __init__(self, findings):
        codes = ", ".join(sorted({f.code for f in findings}))
        super().__init__(f"episode failed validation: {codes}", findings=list(findings))


class NoChecksError(EngineError):
    code = "NO_CHECKS"


class DuplicateEpisodeError(EngineError):
    code = "DUPLICATE_EPISODE"


class UnknownEpisodeError(EngineError):
    code = "UNKNOWN_EPISODE"


class UnknownStageError(EngineError):
    code = "UNKNOWN_STAGE"


class QueryParseError(EngineError):
    """Tag query rejected; ``position`` is the character offset."""

    code = "QUERY_PARSE"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})", position=position)


CLIENT_UNAVAILABLE = "CLIENT_UNAVAILABLE"
