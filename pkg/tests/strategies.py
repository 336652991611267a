"""Shared hypothesis strategies for structured wire elements."""

from hypothesis import strategies as st

from quicprobe.wire import (
    VARINT_MAX,
    AckFrame,
    ConnectionCloseFrame,
    CryptoFrame,
    HandshakeDoneFrame,
    MaxDataFrame,
    MaxStreamDataFrame,
    NewConnectionIdFrame,
    PaddingFrame,
    PingFrame,
    StreamDataBlockedFrame,
    StreamFrame,
)

varints = st.integers(min_value=0, max_value=VARINT_MAX)
small_varints = st.integers(min_value=0, max_value=1 << 20)


@st.composite
def ack_frames(draw):
    # build from decoded intervals so ranges stay sane by construction
    count = draw(st.integers(min_value=0, max_value=4))
    low = draw(st.integers(min_value=0, max_value=1 << 30))
    intervals = []
    for _ in range(count + 1):
        length = draw(st.integers(min_value=0, max_value=50))
        intervals.append((low, low + length))
        low = low + length + 2 + draw(st.integers(min_value=0, max_value=50))
    intervals.reverse()
    first_low, first_high = intervals[0]
    ranges = []
    prev_low = first_low
    for low2, high2 in intervals[1:]:
        ranges.append((prev_low - high2 - 2, high2 - low2))
        prev_low = low2
    return AckFrame(
        largest_acked=first_high,
        ack_delay=draw(small_varints),
        first_range=first_high - first_low,
        ranges=ranges,
    )


def stream_frames():
    return st.builds(
        StreamFrame,
        stream_id=st.integers(min_value=0, max_value=1 << 20),
        offset=st.integers(min_value=0, max_value=1 << 30),
        data=st.binary(min_size=0, max_size=60),
        fin=st.booleans(),
    ).filter(lambda f: not f.is_empty_non_fin)


def frames():
    return st.one_of(
        st.builds(PaddingFrame, count=st.integers(min_value=1, max_value=6)),
        st.builds(PingFrame),
        ack_frames(),
        st.builds(
            CryptoFrame,
            offset=st.integers(min_value=0, max_value=1 << 30),
            data=st.binary(min_size=0, max_size=60),
        ),
        stream_frames(),
        st.builds(MaxDataFrame, max_data=varints),
        st.builds(MaxStreamDataFrame, stream_id=small_varints, max_stream_data=varints),
        st.builds(StreamDataBlockedFrame, stream_id=small_varints, limit=varints),
        st.builds(
            NewConnectionIdFrame,
            sequence=small_varints,
            retire_prior_to=small_varints,
            connection_id=st.binary(min_size=1, max_size=20),
            reset_token=st.binary(min_size=16, max_size=16),
        ),
        st.builds(
            ConnectionCloseFrame,
            error_code=small_varints,
            frame_type=st.one_of(st.none(), small_varints),
            reason=st.text(max_size=20),
        ),
        st.builds(HandshakeDoneFrame),
    )


def frame_lists(min_size=1, max_size=8):
    return st.lists(frames(), min_size=min_size, max_size=max_size)
