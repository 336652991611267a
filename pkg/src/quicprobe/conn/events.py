"""Connection events.

Agents subscribe to event types and are invoked in a fixed order for
each event popped off the per-connection FIFO bus.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..protection import EncryptionLevel
from ..wire import Frame, PacketHeader


@dataclass
class PacketReceived:
    header: PacketHeader
    frames: list[Frame]
    level: EncryptionLevel
    timestamp: float


@dataclass
class PacketSent:
    header: PacketHeader
    frames: list[Frame]
    level: EncryptionLevel
    timestamp: float


@dataclass
class NewKeysAvailable:
    level: EncryptionLevel


@dataclass
class FramesQueued:
    level: EncryptionLevel


@dataclass
class StreamDataReadable:
    stream_id: int


@dataclass
class LossDetected:
    packet_numbers: list[int]
    level: EncryptionLevel


@dataclass
class ConnectionClosed:
    error_code: int
    reason: str


@dataclass
class Timeout:
    timer_id: str


Event = (
    PacketReceived
    | PacketSent
    | NewKeysAvailable
    | FramesQueued
    | StreamDataReadable
    | LossDetected
    | ConnectionClosed
    | Timeout
)
