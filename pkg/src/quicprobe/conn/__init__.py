"""Event-driven connection engine and the composable client agents."""

from .agents import build_ack, build_agents, lenient_decode_tp
from .connection import (
    AGENT_ORDER,
    Connection,
    bundle_and_send,
    FULL_ROSTER,
    HandshakeOutcome,
    HandshakeStage,
    INITIAL_DATAGRAM_MIN,
    MAX_DATAGRAM_SIZE,
    PrerequisiteError,
    perform_handshake,
    start_connection,
)
from .events import (
    ConnectionClosed,
    Event,
    FramesQueued,
    LossDetected,
    NewKeysAvailable,
    PacketReceived,
    PacketSent,
    StreamDataReadable,
    Timeout,
)
from .streams import FlowControlAssertion, StreamRecv, StreamState

__all__ = [
    "AGENT_ORDER",
    "Connection",
    "ConnectionClosed",
    "Event",
    "FULL_ROSTER",
    "FlowControlAssertion",
    "FramesQueued",
    "HandshakeOutcome",
    "HandshakeStage",
    "INITIAL_DATAGRAM_MIN",
    "LossDetected",
    "MAX_DATAGRAM_SIZE",
    "NewKeysAvailable",
    "PacketReceived",
    "PacketSent",
    "PrerequisiteError",
    "StreamDataReadable",
    "StreamRecv",
    "StreamState",
    "Timeout",
    "build_ack",
    "build_agents",
    "bundle_and_send",
    "lenient_decode_tp",
    "perform_handshake",
    "start_connection",
]
