"""Channels that carry APDUs to a device and time each exchange.

``VirtualChannel`` talks to an in-process card and advances a virtual
clock by exactly the duration the card reports. ``TcpChannel`` talks to
:class:`ApduServer` over length-prefixed frames and times the exchange on
the host's monotonic clock, so host and network jitter end up in the
measurement the way a real card reader's would.
"""
from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass

from .apdu import ApduCommand, ApduResponse, decode_command, encode_command
from .device import SimulatedCard
from .errors import BindError, ChannelClosed, MalformedApdu, ProtocolViolation

logger = logging.getLogger(__name__)

MAX_FRAME = 4096
_HEADER = struct.Struct(">H")


@dataclass(frozen=True)
class TimedExchange:
    command: ApduCommand
    response: ApduResponse
    elapsed: int


class VirtualClock:
    """Integer nanosecond clock that only moves when told to."""

    def __init__(self, start: int = 0):
        self._now = start

    def now(self) -> int:
        return self._now

    def advance(self, ns: int) -> None:
        if ns < 0:
            raise ValueError("virtual time cannot go backwards")
        self._now += ns


class MonotonicClock:
    def now(self) -> int:
        return time.perf_counter_ns()


class Channel:
    """Common surface of both channels; not safe for concurrent use."""

    clock = None
    kind = "abstract"

    def exchange(self, command: ApduCommand) -> TimedExchange:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def now(self) -> int:
        return self.clock.now()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class VirtualChannel(Channel):
    kind = "virtual"

    def __init__(self, card: SimulatedCard, clock: VirtualClock | None = None):
        self.card = card
        self.clock = clock or VirtualClock()
        self.closed = False

    def exchange(self, command: ApduCommand) -> TimedExchange:
        if self.closed:
            raise ChannelClosed("virtual channel is closed")
        start = self.clock.now()
        response, duration = self.card.handle_apdu(command)
        self.clock.advance(duration)
        return TimedExchange(command, response, self.clock.now() - start)

    def close(self) -> None:
        self.closed = True


def send_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME:
        raise ProtocolViolation(f"frame of {len(payload)} bytes exceeds {MAX_FRAME}")
    sock.sendall(_HEADER.pack(len(payload)) + payload)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ChannelClosed(f"peer closed the connection after {len(buf)} of {n} bytes")
        buf += chunk
    return bytes(buf)


def recv_frame(sock: socket.socket) -> bytes:
    (length,) = _HEADER.unpack(_recv_exact(sock, _HEADER.size))
    if length > MAX_FRAME:
        raise ProtocolViolation(f"announced frame of {length} bytes exceeds {MAX_FRAME}")
    return _recv_exact(sock, length)


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must be host:port, got {address!r}")
    return host or "127.0.0.1", int(port)


class TcpChannel(Channel):
    kind = "tcp"

    def __init__(self, address, timeout: float = 30.0):
        host, port = parse_address(address) if isinstance(address, str) else address
        self.clock = MonotonicClock()
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ChannelClosed(f"cannot connect to {host}:{port}: {exc}") from None
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.closed = False

    def exchange(self, command: ApduCommand) -> TimedExchange:
        if self.closed:
            raise ChannelClosed("TCP channel is closed")
        frame = encode_command(command)
        try:
            start = time.perf_counter_ns()
            send_frame(self.sock, frame)
            raw = recv_frame(self.sock)
            elapsed = time.perf_counter_ns() - start
        except (ChannelClosed, OSError) as exc:
            self.close()
            if isinstance(exc, ChannelClosed):
                raise
            raise ChannelClosed(str(exc)) from None
        try:
            response = ApduResponse.from_bytes(raw)
        except MalformedApdu as exc:
            raise ProtocolViolation(str(exc)) from None
        return TimedExchange(command, response, elapsed)

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            try:
                self.sock.close()
            except OSError:
                pass


def exchange(channel: Channel, command: ApduCommand) -> TimedExchange:
    return channel.exchange(command)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: ApduServer = self.server.owner
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        with server._conn_lock:
            server._conns.add(sock)
        try:
            self._serve(server, sock)
        finally:
            with server._conn_lock:
                server._conns.discard(sock)

    def _serve(self, server, sock):
        while True:
            try:
                raw = recv_frame(sock)
                command = decode_command(raw)
            except ChannelClosed:
                return
            except (ProtocolViolation, MalformedApdu, OSError) as exc:
                logger.warning("closing connection from %s: %s", self.client_address, exc)
                return
            response = server.process(command)
            try:
                send_frame(sock, response.to_bytes())
            except OSError as exc:
                logger.warning("send to %s failed: %s", self.client_address, exc)
                return


class _ThreadingServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    daemon_threads = True
    allow_reuse_address = False


class ApduServer:
    """Serves one simulated card to any number of clients, one exchange at a time.

    The handler really sleeps for the duration the card reports while
    holding the device lock, so concurrent clients queue behind each other.
    ``log`` records ``(start_ns, end_ns, ins)`` for every exchange served.
    """

    def __init__(self, card: SimulatedCard, address="127.0.0.1:0"):
        host, port = parse_address(address) if isinstance(address, str) else address
        self.card = card
        self._lock = threading.Lock()
        self.log: list[tuple[int, int, int]] = []
        self._conns = set()
        self._conn_lock = threading.Lock()
        try:
            self._server = _ThreadingServer((host, port), _Handler)
        except OSError as exc:
            raise BindError(f"cannot bind {host}:{port}: {exc}") from None
        self._server.owner = self
        self._thread = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    def process(self, command: ApduCommand) -> ApduResponse:
        with self._lock:
            start = time.perf_counter_ns()
            response, duration = self.card.handle_apdu(command)
            _sleep_ns(start + duration)
            self.log.append((start, time.perf_counter_ns(), command.ins))
        return response

    def serve_forever(self) -> None:
        self._server.serve_forever(poll_interval=0.1)

    def start(self) -> "ApduServer":
        self._thread = threading.Thread(target=self.serve_forever, name="apdu-server", daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        """Stop accepting, drop live connections and wait for the accept loop."""
        self._server.shutdown()
        self._server.server_close()
        with self._conn_lock:
            for sock in list(self._conns):
                try:
                    sock.shutdown(socket.SHUT_RDWR)
                except OSError:
                    pass
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()


def _sleep_ns(deadline: int) -> None:
    # coarse sleep, then a short spin so the reply is not sent early
    remaining = deadline - time.perf_counter_ns()
    if remaining > 2_000_000:
        time.sleep((remaining - 1_000_000) / 1e9)
    while time.perf_counter_ns() < deadline:
        pass


def serve(card: SimulatedCard, listen_address: str) -> None:
    """Run the server in the calling thread until interrupted."""
    server = ApduServer(card, listen_address)
    logger.info("serving %s on %s", card.profile.name, server.address)
    try:
        server.serve_forever()
    finally:
        server._server.server_close()
