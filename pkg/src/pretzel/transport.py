"""Framed byte channels.

A frame is a tag byte, a little-endian u32 payload length, and the
payload. Two channel flavors share the interface: an in-memory duplex
pair for tests and a TCP stream for two-process runs. Byte counters per
direction (and per tag) are first-class so protocol tests can assert
network-cost laws.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
from dataclasses import dataclass, field

from .errors import TransportError

MAX_FRAME = 64 * 1024 * 1024

# Frame tags used by the protocol module.
TAG_HELLO = 0x01
TAG_MODEL_CHUNK = 0x02
TAG_DOT_BLINDED = 0x03
TAG_GC_TABLES = 0x04
TAG_OT_MSG = 0x05
TAG_OUTPUT = 0x06
TAG_ABORT = 0x7F

_HEADER = struct.Struct("<BI")


@dataclass
class Frame:
    tag: int
    payload: bytes


@dataclass
class ChannelCounters:
    bytes_sent: int = 0
    bytes_received: int = 0
    frames_sent: int = 0
    frames_received: int = 0
    sent_by_tag: dict = field(default_factory=dict)
    received_by_tag: dict = field(default_factory=dict)
    sent_frames_by_tag: dict = field(default_factory=dict)


class Channel:
    """Base channel: framing, counters, and failure latching."""

    def __init__(self):
        self.counters = ChannelCounters()
        self._broken = False

    def _send_bytes(self, data: bytes) -> None:
        raise NotImplementedError

    def _recv_bytes(self, n: int) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def send_frame(self, tag: int, payload: bytes) -> None:
        if self._broken:
            raise TransportError("channel unusable after previous error")
        if len(payload) > MAX_FRAME:
            self._broken = True
            raise TransportError(f"frame payload {len(payload)} exceeds {MAX_FRAME}")
        data = _HEADER.pack(tag, len(payload)) + payload
        self._send_bytes(data)
        c = self.counters
        c.bytes_sent += len(data)
        c.frames_sent += 1
        c.sent_by_tag[tag] = c.sent_by_tag.get(tag, 0) + len(data)
        c.sent_frames_by_tag[tag] = c.sent_frames_by_tag.get(tag, 0) + 1

    def recv_frame(self) -> Frame:
        if self._broken:
            raise TransportError("channel unusable after previous error")
        try:
            header = self._recv_bytes(_HEADER.size)
            tag, length = _HEADER.unpack(header)
            if length > MAX_FRAME:
                raise TransportError(f"incoming frame length {length} exceeds cap")
            payload = self._recv_bytes(length)
        except TransportError:
            self._broken = True
            raise
        c = self.counters
        c.bytes_received += _HEADER.size + length
        c.frames_received += 1
        c.received_by_tag[tag] = c.received_by_tag.get(tag, 0) + _HEADER.size + length
        return Frame(tag, payload)


class _InMemoryChannel(Channel):
    def __init__(self, out_q: queue.Queue, in_q: queue.Queue):
        super().__init__()
        self._out = out_q
        self._in = in_q
        self._pending = b""
        self._closed = False

    def _send_bytes(self, data: bytes) -> None:
        if self._closed:
            raise TransportError("send on closed channel")
        self._out.put(data)

    def _recv_bytes(self, n: int) -> bytes:
        while len(self._pending) < n:
            item = self._in.get()
            if item is None:
                raise TransportError("peer closed channel mid-frame")
            self._pending += item
        out, self._pending = self._pending[:n], self._pending[n:]
        return out

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._out.put(None)


def pair_inmemory() -> tuple[Channel, Channel]:
    """Duplex in-memory channel pair for single-process tests."""
    q_ab: queue.Queue = queue.Queue()
    q_ba: queue.Queue = queue.Queue()
    return _InMemoryChannel(q_ab, q_ba), _InMemoryChannel(q_ba, q_ab)


class SocketChannel(Channel):
    def __init__(self, sock: socket.socket):
        super().__init__()
        self._sock = sock
        self._send_lock = threading.Lock()

    def _send_bytes(self, data: bytes) -> None:
        try:
            with self._send_lock:
                self._sock.sendall(data)
        except OSError as e:
            raise TransportError(f"socket send failed: {e}") from e

    def _recv_bytes(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            try:
                chunk = self._sock.recv(min(remaining, 1 << 20))
            except OSError as e:
                raise TransportError(f"socket recv failed: {e}") from e
            if not chunk:
                raise TransportError("short read: peer closed")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class Listener:
    def __init__(self, host: str, port: int):
        try:
            self._sock = socket.create_server((host, port))
        except OSError as e:
            raise TransportError(f"bind failed: {e}") from e

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def accept(self) -> SocketChannel:
        try:
            conn, _ = self._sock.accept()
        except OSError as e:
            raise TransportError(f"accept failed: {e}") from e
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return SocketChannel(conn)

    def close(self) -> None:
        self._sock.close()


def listen(host: str, port: int) -> Listener:
    return Listener(host, port)


def connect(host: str, port: int) -> SocketChannel:
    try:
        sock = socket.create_connection((host, port), timeout=30)
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    except OSError as e:
        raise TransportError(f"connect failed: {e}") from e
    return SocketChannel(sock)
