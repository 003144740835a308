"""Length-prefixed wire frames spoken over the secure channel.

Every frame is  u32 body length | u8 type | body.  Byte-exact layout is
documented in docs/wire-protocol.md. PUBLISH carries a publisher-assigned
id echoed back in PUBACK so producers know when a message is safely on the
broker's disk; SUBSCRIBE registers a consumer on one queue.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..core.types import BedwatchError

MAX_FRAME = 32 * 1024 * 1024

T_PUBLISH = 1
T_PUBACK = 2
T_SUBSCRIBE = 3
T_DELIVER = 4
T_ACK = 5
T_HEARTBEAT = 6
T_ERROR = 7

HEARTBEAT_INTERVAL_S = 2.0
MISSED_HEARTBEATS_DEAD = 3


class FrameError(BedwatchError):
    pass


@dataclass(frozen=True)
class Publish:
    publish_id: int
    routing_key: str
    payload: bytes


@dataclass(frozen=True)
class PubAck:
    publish_id: int


@dataclass(frozen=True)
class Subscribe:
    queue: str


@dataclass(frozen=True)
class Deliver:
    tag: int
    redelivered: bool
    payload: bytes


@dataclass(frozen=True)
class Ack:
    tag: int


@dataclass(frozen=True)
class Heartbeat:
    pass


@dataclass(frozen=True)
class ProtocolError:
    code: int
    message: str


Frame = Publish | PubAck | Subscribe | Deliver | Ack | Heartbeat | ProtocolError

E_UNKNOWN_TAG = 1
E_BAD_FRAME = 2
E_UNAUTHORIZED = 3


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise FrameError("string too long")
    return struct.pack(">H", len(raw)) + raw


def encode_frame(frame: Frame) -> bytes:
    if isinstance(frame, Publish):
        body = struct.pack(">Q", frame.publish_id) + _pack_str(frame.routing_key)
        body += struct.pack(">I", len(frame.payload)) + frame.payload
        ftype = T_PUBLISH
    elif isinstance(frame, PubAck):
        body = struct.pack(">Q", frame.publish_id)
        ftype = T_PUBACK
    elif isinstance(frame, Subscribe):
        body = _pack_str(frame.queue)
        ftype = T_SUBSCRIBE
    elif isinstance(frame, Deliver):
        body = struct.pack(">QB", frame.tag, 1 if frame.redelivered else 0)
        body += struct.pack(">I", len(frame.payload)) + frame.payload
        ftype = T_DELIVER
    elif isinstance(frame, Ack):
        body = struct.pack(">Q", frame.tag)
        ftype = T_ACK
    elif isinstance(frame, Heartbeat):
        body = b""
        ftype = T_HEARTBEAT
    elif isinstance(frame, ProtocolError):
        body = struct.pack(">H", frame.code) + _pack_str(frame.message)
        ftype = T_ERROR
    else:
        raise FrameError(f"cannot encode {type(frame).__name__}")
    if len(body) + 1 > MAX_FRAME:
        raise FrameError("frame too large")
    return struct.pack(">I", len(body) + 1) + bytes([ftype]) + body


class _Cursor:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FrameError("truncated frame body")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def string(self) -> str:
        (n,) = struct.unpack(">H", self.take(2))
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise FrameError("invalid utf-8 in frame string") from None

    def blob(self) -> bytes:
        (n,) = struct.unpack(">I", self.take(4))
        return self.take(n)

    def finish(self):
        if self.pos != len(self.data):
            raise FrameError("trailing bytes in frame body")


def decode_frame(ftype: int, body: bytes) -> Frame:
    c = _Cursor(body)
    if ftype == T_PUBLISH:
        (pid,) = struct.unpack(">Q", c.take(8))
        key = c.string()
        payload = c.blob()
        c.finish()
        return Publish(pid, key, payload)
    if ftype == T_PUBACK:
        (pid,) = struct.unpack(">Q", c.take(8))
        c.finish()
        return PubAck(pid)
    if ftype == T_SUBSCRIBE:
        queue = c.string()
        c.finish()
        return Subscribe(queue)
    if ftype == T_DELIVER:
        tag, redelivered = struct.unpack(">QB", c.take(9))
        payload = c.blob()
        c.finish()
        return Deliver(tag, bool(redelivered), payload)
    if ftype == T_ACK:
        (tag,) = struct.unpack(">Q", c.take(8))
        c.finish()
        return Ack(tag)
    if ftype == T_HEARTBEAT:
        c.finish()
        return Heartbeat()
    if ftype == T_ERROR:
        (code,) = struct.unpack(">H", c.take(2))
        msg = c.string()
        c.finish()
        return ProtocolError(code, msg)
    raise FrameError(f"unknown frame type {ftype}")


def read_frame(sock) -> Frame:
    """Blocking read of one frame from a socket-like object."""
    header = _read_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length == 0 or length > MAX_FRAME:
        raise FrameError(f"bad frame length {length}")
    data = _read_exact(sock, length)
    return decode_frame(data[0], data[1:])


def write_frame(sock, frame: Frame) -> None:
    sock.sendall(encode_frame(frame))


def _read_exact(sock, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed connection")
        buf.extend(chunk)
    return bytes(buf)
