"""Long and short packet headers, including version negotiation.

``parse_header`` expects cleartext bytes, i.e. packets whose header
protection has already been removed (or was never applied, as for
version negotiation). The packet number field holds the value as it
appears on the wire; widening a truncated number back to the full
packet number needs receive state and lives with packet protection.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

from .errors import ParseError, SerializeError, TruncationError
from .varint import decode_varint, encode_varint

QUIC_V1 = 0x00000001

ConnectionID = bytes


def check_connection_id(cid: bytes) -> bytes:
    if len(cid) > 20:
        raise SerializeError(f"connection id too long: {len(cid)} bytes")
    return cid


class PacketType(Enum):
    INITIAL = "initial"
    ZERO_RTT = "zero_rtt"
    HANDSHAKE = "handshake"
    RETRY = "retry"
    VERSION_NEGOTIATION = "version_negotiation"
    ONE_RTT = "one_rtt"


_LONG_TYPE_BITS = {
    PacketType.INITIAL: 0,
    PacketType.ZERO_RTT: 1,
    PacketType.HANDSHAKE: 2,
    PacketType.RETRY: 3,
}
_LONG_TYPE_FROM_BITS = {v: k for k, v in _LONG_TYPE_BITS.items()}


@dataclass
class PacketHeader:
    packet_type: PacketType
    version: int = QUIC_V1
    dcid: ConnectionID = b""
    scid: ConnectionID = b""
    token: bytes = b""
    length: int = 0  # long headers: varint covering pn + protected payload
    packet_number: int = 0
    pn_length: int = 1
    supported_versions: list[int] = field(default_factory=list)

    @property
    def is_long(self) -> bool:
        return self.packet_type is not PacketType.ONE_RTT


def serialize_header(header: PacketHeader) -> bytes:
    check_connection_id(header.dcid)
    check_connection_id(header.scid)
    if header.packet_type is PacketType.VERSION_NEGOTIATION:
        out = bytearray([0xC0])
        out += struct.pack(">I", 0)
        out += bytes([len(header.dcid)]) + header.dcid
        out += bytes([len(header.scid)]) + header.scid
        for version in header.supported_versions:
            out += struct.pack(">I", version)
        return bytes(out)

    if not 1 <= header.pn_length <= 4:
        raise SerializeError(f"pn_length must be 1-4, got {header.pn_length}")
    pn_bytes = header.packet_number.to_bytes(8, "big")[-header.pn_length :]

    if header.packet_type is PacketType.ONE_RTT:
        first = 0x40 | (header.pn_length - 1)
        return bytes([first]) + header.dcid + pn_bytes

    first = 0x80 | 0x40 | (_LONG_TYPE_BITS[header.packet_type] << 4)
    out = bytearray()
    out += struct.pack(">I", header.version)
    out += bytes([len(header.dcid)]) + header.dcid
    out += bytes([len(header.scid)]) + header.scid
    if header.packet_type is PacketType.INITIAL:
        out += encode_varint(len(header.token)) + header.token
    if header.packet_type is PacketType.RETRY:
        return bytes([first]) + bytes(out) + header.token
    first |= header.pn_length - 1
    out += encode_varint(header.length)
    out += pn_bytes
    return bytes([first]) + bytes(out)


def parse_header(buf: bytes, short_dcid_len: int = 8) -> tuple[PacketHeader, int]:
    """Parse one cleartext header, returning it and the payload offset.

    ``short_dcid_len`` supplies the connection id length for short
    headers, which do not encode it.
    """
    if not buf:
        raise TruncationError("empty packet", offset=0)
    first = buf[0]
    if first & 0x80:
        return _parse_long(buf)
    return _parse_short(buf, short_dcid_len)


def _need(buf: bytes, pos: int, count: int, what: str) -> None:
    if pos + count > len(buf):
        raise TruncationError(f"truncated {what}", offset=pos)


def _parse_long(buf: bytes) -> tuple[PacketHeader, int]:
    first = buf[0]
    _need(buf, 1, 4, "version")
    version = struct.unpack(">I", buf[1:5])[0]
    pos = 5
    _need(buf, pos, 1, "dcid length")
    dcid_len = buf[pos]
    pos += 1
    if dcid_len > 20:
        raise ParseError(f"dcid length {dcid_len} exceeds 20", offset=pos - 1)
    _need(buf, pos, dcid_len, "dcid")
    dcid = buf[pos : pos + dcid_len]
    pos += dcid_len
    _need(buf, pos, 1, "scid length")
    scid_len = buf[pos]
    pos += 1
    if scid_len > 20:
        raise ParseError(f"scid length {scid_len} exceeds 20", offset=pos - 1)
    _need(buf, pos, scid_len, "scid")
    scid = buf[pos : pos + scid_len]
    pos += scid_len

    if version == 0:
        versions = []
        if (len(buf) - pos) % 4 != 0:
            raise ParseError("version list not a multiple of 4 bytes", offset=pos)
        while pos < len(buf):
            versions.append(struct.unpack(">I", buf[pos : pos + 4])[0])
            pos += 4
        header = PacketHeader(
            packet_type=PacketType.VERSION_NEGOTIATION,
            version=0,
            dcid=dcid,
            scid=scid,
            supported_versions=versions,
        )
        return header, pos

    if not first & 0x40:
        raise ParseError("fixed bit is zero", offset=0)
    packet_type = _LONG_TYPE_FROM_BITS[(first & 0x30) >> 4]

    token = b""
    if packet_type is PacketType.INITIAL:
        token_len, used, _ = decode_varint(buf, pos)
        pos += used
        _need(buf, pos, token_len, "token")
        token = buf[pos : pos + token_len]
        pos += token_len

    if packet_type is PacketType.RETRY:
        if len(buf) - pos < 16:
            raise TruncationError("retry packet shorter than integrity tag", offset=pos)
        token = buf[pos:]
        header = PacketHeader(
            packet_type=PacketType.RETRY, version=version, dcid=dcid, scid=scid, token=token
        )
        return header, len(buf)

    if first & 0x0C:
        raise ParseError("reserved bits set in long header", offset=0)
    length, used, _ = decode_varint(buf, pos)
    pos += used
    pn_length = (first & 0x03) + 1
    _need(buf, pos, pn_length, "packet number")
    packet_number = int.from_bytes(buf[pos : pos + pn_length], "big")
    pos += pn_length
    header = PacketHeader(
        packet_type=packet_type,
        version=version,
        dcid=dcid,
        scid=scid,
        token=token,
        length=length,
        packet_number=packet_number,
        pn_length=pn_length,
    )
    return header, pos


def _parse_short(buf: bytes, short_dcid_len: int) -> tuple[PacketHeader, int]:
    first = buf[0]
    if not first & 0x40:
        raise ParseError("fixed bit is zero", offset=0)
    if first & 0x18:
        raise ParseError("reserved bits set in short header", offset=0)
    pos = 1
    _need(buf, pos, short_dcid_len, "dcid")
    dcid = buf[pos : pos + short_dcid_len]
    pos += short_dcid_len
    pn_length = (first & 0x03) + 1
    _need(buf, pos, pn_length, "packet number")
    packet_number = int.from_bytes(buf[pos : pos + pn_length], "big")
    pos += pn_length
    header = PacketHeader(
        packet_type=PacketType.ONE_RTT,
        dcid=dcid,
        packet_number=packet_number,
        pn_length=pn_length,
    )
    return header, pos
