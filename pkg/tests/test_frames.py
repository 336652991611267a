import pytest
from hypothesis import given, strategies as st

from quicprobe.wire import (
    AckFrame,
    MaxStreamDataFrame,
    PaddingFrame,
    ParseError,
    PingFrame,
    SerializeError,
    StreamFrame,
    encode_varint,
    parse_frames,
    serialize_frames,
)

from .strategies import frame_lists


def coalesce_padding(frames):
    out = []
    for f in frames:
        if isinstance(f, PaddingFrame) and out and isinstance(out[-1], PaddingFrame):
            out[-1] = PaddingFrame(count=out[-1].count + f.count)
        else:
            out.append(f)
    return out


def test_ping_padding_coalesced():
    payload = serialize_frames([PingFrame(), PaddingFrame(count=3)])
    assert parse_frames(payload) == [PingFrame(), PaddingFrame(count=3)]


def test_max_stream_data_round_trip():
    frame = MaxStreamDataFrame(stream_id=0, max_stream_data=160)
    assert parse_frames(serialize_frames([frame])) == [frame]


def test_request_stream_round_trip():
    frame = StreamFrame(stream_id=0, offset=0, data=b"GET /index.html\r\n", fin=True)
    assert parse_frames(serialize_frames([frame])) == [frame]


def test_empty_payload_refused():
    with pytest.raises(SerializeError):
        serialize_frames([])


def test_empty_non_fin_stream_refused_on_serialize():
    with pytest.raises(SerializeError):
        serialize_frames([StreamFrame(stream_id=0, offset=0, data=b"", fin=False)])


def test_empty_non_fin_stream_flagged_on_parse():
    # type 0x0a: LEN bit set, no OFF, no FIN; zero length
    payload = bytes([0x0A]) + encode_varint(0) + encode_varint(0)
    frames = parse_frames(payload)
    assert len(frames) == 1
    assert frames[0].is_empty_non_fin


def test_empty_fin_stream_is_fine():
    frame = StreamFrame(stream_id=0, offset=17, data=b"", fin=True)
    parsed = parse_frames(serialize_frames([frame]))
    assert parsed == [frame]
    assert not parsed[0].is_empty_non_fin


def test_ack_gap_underflow_flagged_not_fatal():
    # gap so large the second range would sit below packet number zero
    payload = (
        encode_varint(0x02)
        + encode_varint(100)  # largest
        + encode_varint(0)  # delay
        + encode_varint(1)  # one extra range
        + encode_varint(0)  # first range: [100, 100]
        + encode_varint((1 << 62) - 1)  # gap
        + encode_varint(0)
    )
    frames = parse_frames(payload)
    assert len(frames) == 1
    ack = frames[0]
    assert isinstance(ack, AckFrame)
    assert ack.range_sanity_error
    assert ack.decoded_ranges() == [(100, 100)]


def test_ack_ranges_strictly_descending():
    ack = AckFrame(largest_acked=100, first_range=10, ranges=[(0, 5), (3, 2)])
    decoded = ack.decoded_ranges()
    assert decoded == [(90, 100), (83, 88), (76, 78)]
    for (lo, hi), (lo2, hi2) in zip(decoded, decoded[1:]):
        assert lo > hi2  # descending, non-overlapping, non-adjacent
        assert lo2 <= hi2


def test_unknown_frame_type_is_error():
    with pytest.raises(ParseError, match="0x1f"):
        parse_frames(bytes([0x1F]))


def test_truncated_frame_has_offset():
    payload = serialize_frames([PingFrame()]) + bytes([0x06, 0x00])  # CRYPTO cut short
    with pytest.raises(ParseError) as exc:
        parse_frames(payload)
    assert exc.value.offset == 1


@given(frame_lists())
def test_round_trip_property(frames):
    payload = serialize_frames(frames)
    assert parse_frames(payload) == coalesce_padding(frames)


@given(
    largest=st.integers(min_value=0, max_value=1 << 40),
    delay=st.integers(min_value=0, max_value=1 << 20),
    first=st.integers(min_value=0, max_value=1 << 41),
    pairs=st.lists(
        st.tuples(st.integers(0, 1 << 41), st.integers(0, 1 << 41)), max_size=5
    ),
)
def test_any_parsed_ack_decodes_descending_or_flags(largest, delay, first, pairs):
    wire = (
        encode_varint(0x02)
        + encode_varint(largest)
        + encode_varint(delay)
        + encode_varint(len(pairs))
        + encode_varint(first)
        + b"".join(encode_varint(g) + encode_varint(l) for g, l in pairs)
    )
    (ack,) = parse_frames(wire)
    decoded = ack.decoded_ranges()
    for (lo, hi), (lo2, hi2) in zip(decoded, decoded[1:]):
        assert lo > hi2 + 1  # strictly descending with a genuine gap
    for lo, hi in decoded:
        assert 0 <= lo <= hi
    if len(decoded) != len(pairs) + 1:
        assert ack.range_sanity_error


@given(st.binary(max_size=1500))
def test_fuzzed_input_terminates_with_frames_or_positioned_error(data):
    try:
        frames = parse_frames(data)
    except ParseError as exc:
        assert exc.offset is None or 0 <= exc.offset <= len(data)
    else:
        assert isinstance(frames, list)
