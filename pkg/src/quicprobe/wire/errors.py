"""Wire-level error types.

Parse errors carry the byte offset at which decoding stopped so traces
and bug reports can point at the exact position.
"""

from __future__ import annotations


class WireError(Exception):
    """Base class for wire codec failures."""


class WireRangeError(WireError):
    """A value cannot be represented in the target encoding."""


class ParseError(WireError):
    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (at byte {offset})")
        self.offset = offset


class TruncationError(ParseError):
    """Input ended before a declared length was satisfied."""


class SerializeError(WireError):
    """Refusal to emit an invalid wire element."""
