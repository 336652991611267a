import pytest
from hypothesis import given, strategies as st

from quicprobe.wire import (
    QUIC_V1,
    PacketHeader,
    PacketType,
    ParseError,
    TruncationError,
    parse_header,
    serialize_header,
)


def test_initial_header_round_trip():
    header = PacketHeader(
        packet_type=PacketType.INITIAL,
        version=QUIC_V1,
        dcid=bytes.fromhex("8394c8f03e515708"),
        scid=b"\x01\x02",
        token=b"",
        length=1182,
        packet_number=0,
        pn_length=2,
    )
    buf = serialize_header(header)
    parsed, offset = parse_header(buf)
    assert parsed == header
    assert offset == len(buf)


def test_version_negotiation_parse():
    header = PacketHeader(
        packet_type=PacketType.VERSION_NEGOTIATION,
        dcid=b"\xaa" * 4,
        scid=b"\xbb" * 8,
        supported_versions=[1],
    )
    buf = serialize_header(header)
    parsed, _ = parse_header(buf)
    assert parsed.packet_type is PacketType.VERSION_NEGOTIATION
    assert parsed.version == 0
    assert parsed.supported_versions == [1]


def test_version_negotiation_bad_list_length():
    header = PacketHeader(
        packet_type=PacketType.VERSION_NEGOTIATION,
        supported_versions=[1],
    )
    buf = serialize_header(header) + b"\x00"
    with pytest.raises(ParseError):
        parse_header(buf)


def test_truncated_long_header():
    with pytest.raises(TruncationError):
        parse_header(b"\xc0")


def test_reserved_bits_rejected():
    header = PacketHeader(packet_type=PacketType.INITIAL, dcid=b"\x01", length=20, pn_length=1)
    buf = bytearray(serialize_header(header))
    buf[0] |= 0x0C
    with pytest.raises(ParseError):
        parse_header(bytes(buf))


def test_short_header_round_trip():
    header = PacketHeader(
        packet_type=PacketType.ONE_RTT,
        dcid=b"\x11" * 8,
        packet_number=0x1234,
        pn_length=2,
    )
    buf = serialize_header(header)
    parsed, offset = parse_header(buf, short_dcid_len=8)
    assert parsed == header
    assert offset == 1 + 8 + 2


def test_retry_header_round_trip():
    header = PacketHeader(
        packet_type=PacketType.RETRY,
        dcid=b"\x01",
        scid=b"\x02\x03",
        token=b"tok" + b"\x00" * 16,
    )
    buf = serialize_header(header)
    parsed, offset = parse_header(buf)
    assert parsed.packet_type is PacketType.RETRY
    assert parsed.token == header.token
    assert offset == len(buf)


_cids = st.binary(min_size=0, max_size=20)


@given(
    packet_type=st.sampled_from([PacketType.INITIAL, PacketType.HANDSHAKE, PacketType.ZERO_RTT]),
    dcid=_cids,
    scid=_cids,
    token=st.binary(max_size=32),
    length=st.integers(min_value=0, max_value=1 << 20),
    pn_length=st.integers(min_value=1, max_value=4),
    pn_low=st.integers(min_value=0),
)
def test_long_header_round_trip_property(packet_type, dcid, scid, token, length, pn_length, pn_low):
    header = PacketHeader(
        packet_type=packet_type,
        version=QUIC_V1,
        dcid=dcid,
        scid=scid,
        token=token if packet_type is PacketType.INITIAL else b"",
        length=length,
        packet_number=pn_low % (1 << (8 * pn_length)),
        pn_length=pn_length,
    )
    parsed, offset = parse_header(serialize_header(header))
    assert parsed == header
    assert offset == len(serialize_header(header))


@given(dcid=st.binary(min_size=0, max_size=20), pn_length=st.integers(1, 4), pn=st.integers(0))
def test_short_header_round_trip_property(dcid, pn_length, pn):
    header = PacketHeader(
        packet_type=PacketType.ONE_RTT,
        dcid=dcid,
        packet_number=pn % (1 << (8 * pn_length)),
        pn_length=pn_length,
    )
    parsed, _ = parse_header(serialize_header(header), short_dcid_len=len(dcid))
    assert parsed == header
