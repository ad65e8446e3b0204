"""Shared exception base and the run-outcome taxonomy."""

from __future__ import annotations

import enum


class AlphaForgeError(Exception):
    """Base class for every error raised by the engine."""


class ErrorKind(str, enum.Enum):
    SUCCESS = "Success"
    SYNTAX_ERROR = "SyntaxError"
    NAME_ERROR = "NameError"
    ATTRIBUTE_ERROR = "AttributeError"
    OTHER_ERROR = "OtherError"
    TIMEOUT = "Timeout"
    PROTOCOL_ERROR = "ProtocolError"

    def folded(self) -> "ErrorKind":
        """Collapse engine-side failure kinds into the reporting taxonomy."""
        if self in (ErrorKind.TIMEOUT, ErrorKind.PROTOCOL_ERROR):
            return ErrorKind.OTHER_ERROR
        return self

    @classmethod
    def reported(cls) -> tuple["ErrorKind", ...]:
        """Buckets used in error tables, in display order."""
        return (
            cls.SUCCESS,
            cls.SYNTAX_ERROR,
            cls.NAME_ERROR,
            cls.ATTRIBUTE_ERROR,
            cls.OTHER_ERROR,
        )
