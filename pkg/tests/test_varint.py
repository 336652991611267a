import pytest
from hypothesis import given, strategies as st

from quicprobe.wire import (
    VARINT_MAX,
    TruncationError,
    WireRangeError,
    decode_varint,
    encode_varint,
    varint_size,
)

# Published variable-length integer vectors for version 1.
VECTORS = [
    (0x25, 37, 1),
    (0x7BBD, 15293, 2),
    (0x9D7F3E7D, 494878333, 4),
    (0xC2197C5EFF14E88C, 151288809941952652, 8),
]


@pytest.mark.parametrize("wire,value,size", VECTORS)
def test_published_vectors_decode(wire, value, size):
    buf = wire.to_bytes(size, "big")
    assert decode_varint(buf) == (value, size, True)


@pytest.mark.parametrize("wire,value,size", VECTORS)
def test_published_vectors_encode(wire, value, size):
    assert encode_varint(value) == wire.to_bytes(size, "big")


def test_zero_single_byte():
    assert encode_varint(0) == b"\x00"
    assert decode_varint(b"\x00") == (0, 1, True)


def test_non_minimal_flagged():
    # 37 hand-encoded in the 2-byte form
    assert decode_varint(bytes.fromhex("4025")) == (37, 2, False)


def test_out_of_range():
    with pytest.raises(WireRangeError):
        encode_varint(1 << 62)
    with pytest.raises(WireRangeError):
        encode_varint(-1)


def test_truncated():
    with pytest.raises(TruncationError):
        decode_varint(b"")
    with pytest.raises(TruncationError):
        decode_varint(b"\x7b")  # prefix declares 2 bytes


@given(st.integers(min_value=0, max_value=VARINT_MAX))
def test_round_trip_minimal(value):
    encoded = encode_varint(value)
    assert len(encoded) == varint_size(value)
    assert decode_varint(encoded) == (value, len(encoded), True)


@given(st.integers(min_value=0, max_value=VARINT_MAX), st.binary(max_size=8))
def test_round_trip_with_trailer(value, trailer):
    encoded = encode_varint(value)
    decoded, consumed, minimal = decode_varint(encoded + trailer)
    assert (decoded, consumed, minimal) == (value, len(encoded), True)
