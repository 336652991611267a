"""Per-connection event bus, packet spaces and the client send path.

One connection is one scenario execution: single-threaded, sequential
dispatch, agents invoked in a fixed order so traces are reproducible.
"""

from __future__ import annotations

import os
import select
import socket
import time
from dataclasses import dataclass, field
from enum import Enum

from ..protection import (
    EncryptionLevel,
    KeyMaterial,
    PACKET_TYPE_FOR_LEVEL,
    cleartext_packet_bytes,
    derive_initial_keys,
    packet_number_length,
    protect,
)
from ..wire import (
    ConnectionCloseFrame,
    CryptoFrame,
    Frame,
    MaxStreamDataFrame,
    PacketHeader,
    PaddingFrame,
    StreamFrame,
    TransportParameters,
    is_ack_eliciting,
    serialize_frames,
)
from ..wire.transport_params import TP_INITIAL_MAX_STREAM_DATA_BIDI_REMOTE
from .events import Event, FramesQueued, PacketSent, Timeout
from .streams import FlowControlAssertion, StreamState

MAX_DATAGRAM_SIZE = 1252
INITIAL_DATAGRAM_MIN = 1200
RETRANSMISSION_TIMER_MS = 500

FULL_ROSTER = frozenset(
    {
        "socket",
        "parser",
        "tls",
        "ack",
        "flow_control",
        "handshake",
        "retransmission",
        "bundler",
        "closing",
    }
)

# fixed dispatch order, so event handling is reproducible
AGENT_ORDER = (
    "parser",
    "tls",
    "ack",
    "flow_control",
    "handshake",
    "retransmission",
    "bundler",
    "closing",
    "socket",
)


class PrerequisiteError(Exception):
    """The connection could not even be attempted (maps to trace Error)."""


class HandshakeStage(Enum):
    NO_RESPONSE = "no_response"
    VERSION_MISMATCH = "version_mismatch"
    INCOMPLETE = "handshake_incomplete"
    KEYS_UNAVAILABLE = "keys_unavailable"


@dataclass
class HandshakeOutcome:
    succeeded: bool
    stage: HandshakeStage | None = None


@dataclass
class SentPacket:
    frames: list[Frame]
    sent_at: float
    ack_eliciting: bool
    level: EncryptionLevel
    retransmittable: bool = True


@dataclass
class PacketSpace:
    next_pn: int = 0
    largest_acked: int = -1
    largest_received: int = -1
    received: set[int] = field(default_factory=set)
    sent: dict[int, SentPacket] = field(default_factory=dict)


def _space_name(level: EncryptionLevel) -> str:
    if level is EncryptionLevel.INITIAL:
        return "initial"
    if level is EncryptionLevel.HANDSHAKE:
        return "handshake"
    return "application"  # 0-RTT and 1-RTT share a number space


class Connection:
    """Client-side QUIC connection driven by a roster of agents."""

    def __init__(
        self,
        host: str,
        port: int,
        provider,
        roster: frozenset[str] | set[str] = FULL_ROSTER,
        local_tp: TransportParameters | None = None,
        trace=None,
        version: int = 0x00000001,
        dcid: bytes | None = None,
        scid: bytes | None = None,
        assumed_peer_tp: TransportParameters | None = None,
        hold_client_finished: bool = False,
        idle_timeout_ms: int | None = None,
    ):
        self.host = host
        self.port = port
        self.provider = provider
        self.roster = frozenset(roster)
        self.local_tp = local_tp if local_tp is not None else TransportParameters()
        self.trace = trace
        self.version = version
        self.role = "client"

        self.original_dcid = dcid if dcid is not None else os.urandom(8)
        self.dcid = self.original_dcid
        self.scid = scid if scid is not None else os.urandom(8)
        self._server_cid_seen = False

        self.spaces = {
            "initial": PacketSpace(),
            "handshake": PacketSpace(),
            "application": PacketSpace(),
        }
        self.keys: dict[tuple[EncryptionLevel, str], KeyMaterial] = {}
        self.queues: dict[EncryptionLevel, list[Frame]] = {level: [] for level in EncryptionLevel}
        self.streams: dict[int, StreamState] = {}
        self.timers: dict[str, float] = {}

        self._bus: list[Event] = []
        self._agents: dict[str, object] = {}
        self._effects: list[tuple[str, str, object]] | None = None
        self._current_agent: str | None = None
        self._held_crypto: list[tuple[EncryptionLevel, bytes]] = []
        self._crypto_offsets: dict[EncryptionLevel, int] = {}

        self.sock: socket.socket | None = None
        self.started = False
        self.closed = False
        self.close_received: tuple[int, str] | None = None

        # connection-level flow control (what the peer lets us send)
        self.peer_tp: TransportParameters | None = None
        if assumed_peer_tp is not None:
            self.peer_tp = assumed_peer_tp
        self.peer_tp_error: str | None = None
        self.connection_send_limit = 0
        self.connection_bytes_sent = 0
        if assumed_peer_tp is not None:
            self.connection_send_limit = assumed_peer_tp.initial_max_data or 0

        self.hold_client_finished = hold_client_finished
        self.handshake_complete = False
        self.client_finished_sent = False

        # observations scenarios read back
        self.idle_timeout_ms = idle_timeout_ms
        self.idle_timed_out = False
        self._last_activity = time.monotonic()

        self.bytes_received = 0
        self.bytes_sent = 0
        self.decrypt_failures: dict[EncryptionLevel, int] = {}
        self.version_negotiation: PacketHeader | None = None
        self.malformed_version_negotiation: str | None = None
        self.retry_received: PacketHeader | None = None
        self.empty_stream_frames_received = 0
        self.blocked_frames_received = 0
        self.flagged_acks_received = 0
        self.frame_parse_errors: list[str] = []
        self.agent_errors: list[tuple[str, str]] = []

        self._start_time = time.monotonic()

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        """Bind the socket and let enabled agents take their first actions."""
        from .agents import build_agents

        unknown = self.roster - FULL_ROSTER
        if unknown:
            raise ValueError(f"unknown agents: {sorted(unknown)}")
        self._agents = build_agents(self)
        try:
            info = socket.getaddrinfo(self.host, self.port, type=socket.SOCK_DGRAM)
        except socket.gaierror as exc:
            raise PrerequisiteError(f"cannot resolve {self.host}: {exc}")
        family, socktype, proto, _, addr = info[0]
        try:
            self.sock = socket.socket(family, socktype, proto)
            self.sock.connect(addr)
            self.sock.setblocking(False)
        except OSError as exc:
            raise PrerequisiteError(f"cannot open socket to {self.host}:{self.port}: {exc}")

        # probes offering an unknown version still protect their Initial with
        # v1 keys; the server must answer from the header alone
        client_keys, server_keys = derive_initial_keys(self.original_dcid, version=0x00000001)
        self.keys[(EncryptionLevel.INITIAL, "client")] = client_keys
        self.keys[(EncryptionLevel.INITIAL, "server")] = server_keys

        self.started = True
        for name in AGENT_ORDER:
            agent = self._agents.get(name)
            if agent is not None and name in self.roster:
                self._run_handler(name, lambda a=agent: a.start(self))
        self._flush()

    def stop(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None

    # -- event bus ------------------------------------------------------

    def emit(self, event: Event) -> None:
        self._bus.append(event)

    def dispatch(self, event: Event) -> list[tuple[str, str, object]]:
        """Run every enabled, subscribed agent on one event, in the fixed
        order. Returns the effects they performed (for introspection).
        A failing handler is isolated and recorded; dispatch continues."""
        effects: list[tuple[str, str, object]] = []
        previous, self._effects = self._effects, effects
        try:
            for name in AGENT_ORDER:
                if name not in self.roster:
                    continue
                agent = self._agents.get(name)
                if agent is None or not isinstance(event, agent.subscriptions):
                    continue
                self._current_agent = name
                self._run_handler(name, lambda a=agent: a.handle(self, event))
        finally:
            self._effects = previous
            self._current_agent = None
        return effects

    def _run_handler(self, name: str, thunk) -> None:
        try:
            thunk()
        except FlowControlAssertion:
            raise
        except Exception as exc:  # isolate the failing agent
            self.agent_errors.append((name, repr(exc)))
            if self.trace:
                self.trace.note("agent_error", {"agent": name, "error": repr(exc)})

    def _record_effect(self, kind: str, detail: object) -> None:
        if self._effects is not None:
            self._effects.append((getattr(self, "_current_agent", None) or "-", kind, detail))

    def _drain_bus(self) -> None:
        while self._bus:
            event = self._bus.pop(0)
            self.dispatch(event)

    # -- pumping ----------------------------------------------------------

    def pump(self, wait: float = 0.05) -> None:
        """Wait briefly for datagrams, then process events, timers and the
        send path until quiescent."""
        if self.sock is None:
            return
        readable, _, _ = select.select([self.sock], [], [], max(wait, 0))
        if readable:
            while True:
                try:
                    datagram = self.sock.recv(65535)
                except (BlockingIOError, InterruptedError):
                    break
                except OSError:
                    break
                if not datagram:
                    break
                self.bytes_received += len(datagram)
                self._last_activity = time.monotonic()
                parser = self._agents.get("parser")
                if parser is not None and "parser" in self.roster:
                    self._run_handler(
                        "parser", lambda p=parser, d=datagram: p.datagram(self, d)
                    )
                # finish this datagram (e.g. install the keys it unlocked)
                # before parsing the next one
                self._drain_bus()
        self._drain_bus()
        self._check_timers()
        self._drain_bus()
        self._flush()
        self._drain_bus()
        if (
            self.idle_timeout_ms is not None
            and not self.idle_timed_out
            and time.monotonic() - self._last_activity > self.idle_timeout_ms / 1000
        ):
            self.idle_timed_out = True

    def run_until(self, predicate, timeout: float) -> bool:
        deadline = time.monotonic() + timeout
        while True:
            if predicate():
                return True
            if self.idle_timed_out:
                return bool(predicate())
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return bool(predicate())
            self.pump(min(0.02, remaining))

    def _check_timers(self) -> None:
        now = time.monotonic()
        for timer_id, deadline in list(self.timers.items()):
            if now >= deadline:
                del self.timers[timer_id]
                self.emit(Timeout(timer_id=timer_id))

    def arm_timer(self, timer_id: str, delay_ms: int) -> None:
        self.timers[timer_id] = time.monotonic() + delay_ms / 1000
        self._record_effect("arm_timer", timer_id)

    def cancel_timer(self, timer_id: str) -> None:
        self.timers.pop(timer_id, None)
        self._record_effect("cancel_timer", timer_id)

    # -- keys -------------------------------------------------------------

    def install_key(self, km: KeyMaterial) -> bool:
        slot = (km.level, km.direction)
        if slot in self.keys:
            return False
        self.keys[slot] = km
        return True

    def send_keys(self, level: EncryptionLevel) -> KeyMaterial | None:
        return self.keys.get((level, self.role))

    def recv_keys(self, level: EncryptionLevel) -> KeyMaterial | None:
        peer = "server" if self.role == "client" else "client"
        if level is EncryptionLevel.ZERO_RTT:
            return None  # servers never send 0-RTT
        return self.keys.get((level, peer))

    # -- send path ----------------------------------------------------------

    def space(self, level: EncryptionLevel) -> PacketSpace:
        return self.spaces[_space_name(level)]

    def queue_frame(self, level: EncryptionLevel, frame: Frame) -> None:
        self.queues[level].append(frame)
        self._record_effect("queue_frame", (level, frame))
        self.emit(FramesQueued(level=level))

    def queue_crypto(self, level: EncryptionLevel, data: bytes, offset: int | None = None) -> None:
        start = offset if offset is not None else self._crypto_offsets.setdefault(level, 0)
        self.queues[level].append(CryptoFrame(offset=start, data=data))
        if offset is None:
            self._crypto_offsets[level] = start + len(data)
        self.emit(FramesQueued(level=level))

    def send_stream(
        self,
        stream_id: int,
        data: bytes,
        fin: bool = False,
        level: EncryptionLevel = EncryptionLevel.ONE_RTT,
    ) -> None:
        """Queue stream data, enforcing the peer-advertised limits."""
        stream = self.stream(stream_id)
        end = stream.send.offset + len(data)
        if end > stream.send.limit:
            raise FlowControlAssertion(
                f"stream {stream_id}: sending to offset {end} exceeds limit {stream.send.limit}"
            )
        if self.connection_bytes_sent + len(data) > self.connection_send_limit:
            raise FlowControlAssertion(
                f"connection: {self.connection_bytes_sent + len(data)} exceeds "
                f"limit {self.connection_send_limit}"
            )
        frame = StreamFrame(stream_id=stream_id, offset=stream.send.offset, data=data, fin=fin)
        stream.send.offset = end
        stream.send.fin_sent = stream.send.fin_sent or fin
        self.connection_bytes_sent += len(data)
        self.queue_frame(level, frame)

    def stream(self, stream_id: int) -> StreamState:
        state = self.streams.get(stream_id)
        if state is None:
            state = StreamState(stream_id=stream_id)
            state.send.limit = self._initial_send_limit(stream_id)
            self.streams[stream_id] = state
        return state

    def _initial_send_limit(self, stream_id: int) -> int:
        if self.peer_tp is None:
            return 0
        # client-initiated bidirectional streams: the server caps our
        # sending through its "remote bidi" parameter
        return self.peer_tp.get_int(TP_INITIAL_MAX_STREAM_DATA_BIDI_REMOTE) or 0

    def apply_peer_tp(self, tp: TransportParameters) -> None:
        self.peer_tp = tp
        self.connection_send_limit = max(self.connection_send_limit, tp.initial_max_data or 0)
        for stream in self.streams.values():
            stream.send.limit = max(stream.send.limit, self._initial_send_limit(stream.stream_id))

    def raise_stream_limit(self, stream_id: int, new_limit: int) -> None:
        self.queue_frame(
            EncryptionLevel.ONE_RTT,
            MaxStreamDataFrame(stream_id=stream_id, max_stream_data=new_limit),
        )

    @property
    def client_finished_ready(self) -> bool:
        """True once the held handshake finish is waiting for release."""
        return bool(self._held_crypto)

    def release_client_finished(self) -> None:
        self.hold_client_finished = False
        held, self._held_crypto = self._held_crypto, []
        for level, data in held:
            self.queue_crypto(level, data)
        self._flush()

    def close(self, error_code: int = 0, reason: str = "") -> None:
        if self.closed or not self.started or self.sock is None:
            return
        level = EncryptionLevel.ONE_RTT
        if self.send_keys(level) is None:
            level = (
                EncryptionLevel.HANDSHAKE
                if self.send_keys(EncryptionLevel.HANDSHAKE)
                else EncryptionLevel.INITIAL
            )
        self.queues[level].append(
            ConnectionCloseFrame(error_code=error_code, frame_type=0, reason=reason)
        )
        self._flush()
        self.closed = True

    # -- packet construction ------------------------------------------------

    def _header_overhead(self, level: EncryptionLevel, pn_length: int) -> int:
        if level is EncryptionLevel.ONE_RTT:
            return 1 + len(self.dcid) + pn_length
        base = 1 + 4 + 1 + len(self.dcid) + 1 + len(self.scid) + 2 + pn_length
        if level is EncryptionLevel.INITIAL:
            base += 1  # empty token length
        return base

    def send_packet(
        self,
        level: EncryptionLevel,
        frames: list[Frame],
        packet_number: int | None = None,
        retransmittable: bool = True,
    ) -> PacketSent:
        """Build, protect and transmit one packet immediately."""
        keys = self.send_keys(level)
        if keys is None:
            raise PrerequisiteError(f"no send keys at {level.label}")
        space = self.space(level)
        pn = space.next_pn if packet_number is None else packet_number
        space.next_pn = max(space.next_pn, pn + 1)
        pn_length = packet_number_length(pn, space.largest_acked)

        frames = list(frames)
        plaintext = serialize_frames(frames)
        min_payload = 4 - pn_length + 1  # header-protection sample reach
        if len(plaintext) < min_payload:
            frames.append(PaddingFrame(count=min_payload - len(plaintext)))
            plaintext = serialize_frames(frames)

        header = PacketHeader(
            packet_type=PACKET_TYPE_FOR_LEVEL[level],
            version=self.version,
            dcid=self.dcid,
            scid=self.scid if level is not EncryptionLevel.ONE_RTT else b"",
            packet_number=pn,
            pn_length=pn_length,
        )
        packet = protect(header, plaintext, keys)
        self._sendto(packet)
        space.sent[pn] = SentPacket(
            frames=frames,
            sent_at=time.monotonic(),
            ack_eliciting=is_ack_eliciting(frames),
            level=level,
            retransmittable=retransmittable,
        )
        if self.trace:
            self.trace.log_packet(
                "tx", level.label, cleartext_packet_bytes(header, plaintext), len(self.dcid)
            )
        event = PacketSent(header=header, frames=frames, level=level, timestamp=time.monotonic())
        self.emit(event)
        self._record_effect("send_packet", (level, pn))
        return event

    def send_raw(self, datagram: bytes) -> None:
        self._sendto(datagram)

    def _sendto(self, datagram: bytes) -> None:
        if self.sock is None:
            raise PrerequisiteError("socket closed")
        self.sock.send(datagram)
        self.bytes_sent += len(datagram)

    def _flush(self) -> None:
        bundler = self._agents.get("bundler")
        if bundler is not None and "bundler" in self.roster:
            self._run_handler("bundler", lambda: bundler.flush(self))

    # -- receive path ---------------------------------------------------------

    def record_received(self, level: EncryptionLevel, pn: int) -> None:
        space = self.space(level)
        space.received.add(pn)
        space.largest_received = max(space.largest_received, pn)

    def note_decrypt_failure(self, level: EncryptionLevel, raw: bytes) -> None:
        self.decrypt_failures[level] = self.decrypt_failures.get(level, 0) + 1
        if self.trace:
            self.trace.log_undecryptable(level.label, raw)

    @property
    def total_decrypt_failures(self) -> int:
        return sum(self.decrypt_failures.values())


def start_connection(
    host: str,
    port: int,
    roster: frozenset[str] | set[str],
    provider,
    **kwargs,
) -> Connection:
    """Open a fresh connection with exactly the requested agents enabled."""
    conn = Connection(host, port, provider, roster=roster, **kwargs)
    conn.start()
    return conn


def bundle_and_send(conn: Connection, level: EncryptionLevel) -> PacketSent | None:
    """Drain one packet's worth of the frame queue at ``level``.

    Returns the PacketSent event, or None when the queue is empty or the
    level's keys are not yet available (the send stays deferred until
    NewKeysAvailable lets the bundler pick it up)."""
    queue = conn.queues[level]
    if not queue or conn.send_keys(level) is None:
        return None
    bundler = conn._agents.get("bundler")
    if bundler is None or "bundler" not in conn.roster:
        return None
    return bundler._send_one(conn, level, queue)


def perform_handshake(conn: Connection, timeout_ms: int = 10_000) -> HandshakeOutcome:
    """Drive the connection until the 1-RTT exchange finished, or report
    the stage it failed at."""
    conn.run_until(lambda: conn.handshake_complete or conn.closed, timeout_ms / 1000)
    if conn.handshake_complete:
        if conn.send_keys(EncryptionLevel.ONE_RTT) is None or (
            conn.recv_keys(EncryptionLevel.ONE_RTT) is None
        ):
            return HandshakeOutcome(False, HandshakeStage.KEYS_UNAVAILABLE)
        return HandshakeOutcome(True)
    if conn.version_negotiation is not None:
        return HandshakeOutcome(False, HandshakeStage.VERSION_MISMATCH)
    if conn.bytes_received == 0:
        return HandshakeOutcome(False, HandshakeStage.NO_RESPONSE)
    return HandshakeOutcome(False, HandshakeStage.INCOMPLETE)
