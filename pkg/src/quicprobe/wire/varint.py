"""QUIC variable-length integers.

The top two bits of the first byte select an encoded length of 1, 2, 4 or
8 bytes; the remaining bits carry the value big-endian. Values larger than
2^62 - 1 cannot be represented.
"""

from __future__ import annotations

import struct

from .errors import TruncationError, WireRangeError

VARINT_MAX = (1 << 62) - 1

_THRESHOLDS = (0x3F, 0x3FFF, 0x3FFFFFFF, VARINT_MAX)


def varint_size(value: int) -> int:
    """Minimal encoded size in bytes for ``value``."""
    if value < 0 or value > VARINT_MAX:
        raise WireRangeError(f"varint out of range: {value}")
    for size, limit in zip((1, 2, 4, 8), _THRESHOLDS):
        if value <= limit:
            return size
    raise AssertionError("unreachable")


def encode_varint(value: int) -> bytes:
    """Encode ``value`` using the minimal-length form."""
    size = varint_size(value)
    if size == 1:
        return struct.pack(">B", value)
    if size == 2:
        return struct.pack(">H", value | 0x4000)
    if size == 4:
        return struct.pack(">I", value | 0x80000000)
    return struct.pack(">Q", value | 0xC000000000000000)


def decode_varint(buf: bytes, offset: int = 0) -> tuple[int, int, bool]:
    """Decode one varint starting at ``offset``.

    Returns ``(value, consumed, minimal)``. Non-minimal encodings decode
    normally but come back with ``minimal=False`` so callers can record
    the peer's sloppiness instead of masking it.
    """
    if offset >= len(buf):
        raise TruncationError("varint: empty buffer", offset=offset)
    prefix = buf[offset] >> 6
    size = 1 << prefix
    if offset + size > len(buf):
        raise TruncationError(
            f"varint: length prefix declares {size} bytes, {len(buf) - offset} available",
            offset=offset,
        )
    value = buf[offset] & 0x3F
    for i in range(1, size):
        value = (value << 8) | buf[offset + i]
    minimal = size == varint_size(value)
    return value, size, minimal
