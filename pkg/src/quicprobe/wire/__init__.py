"""Lossless parsing and serialization of QUIC version 1 wire elements."""

from .errors import ParseError, SerializeError, TruncationError, WireError, WireRangeError
from .frames import (
    AckFrame,
    ConnectionCloseFrame,
    CryptoFrame,
    Frame,
    HandshakeDoneFrame,
    MaxDataFrame,
    MaxStreamDataFrame,
    NewConnectionIdFrame,
    PaddingFrame,
    PingFrame,
    StreamDataBlockedFrame,
    StreamFrame,
    is_ack_eliciting,
    parse_frames,
    serialize_frame,
    serialize_frames,
)
from .header import (
    QUIC_V1,
    ConnectionID,
    PacketHeader,
    PacketType,
    check_connection_id,
    parse_header,
    serialize_header,
)
from .transport_params import (
    TransportParameters,
    decode_transport_parameters,
    encode_transport_parameters,
)
from .varint import VARINT_MAX, decode_varint, encode_varint, varint_size

__all__ = [
    "AckFrame",
    "ConnectionCloseFrame",
    "ConnectionID",
    "CryptoFrame",
    "Frame",
    "HandshakeDoneFrame",
    "MaxDataFrame",
    "MaxStreamDataFrame",
    "NewConnectionIdFrame",
    "PacketHeader",
    "PacketType",
    "PaddingFrame",
    "ParseError",
    "PingFrame",
    "QUIC_V1",
    "SerializeError",
    "StreamDataBlockedFrame",
    "StreamFrame",
    "TransportParameters",
    "TruncationError",
    "VARINT_MAX",
    "WireError",
    "WireRangeError",
    "check_connection_id",
    "decode_transport_parameters",
    "decode_varint",
    "encode_transport_parameters",
    "encode_varint",
    "is_ack_eliciting",
    "parse_frames",
    "parse_header",
    "serialize_frame",
    "serialize_frames",
    "varint_size",
]
