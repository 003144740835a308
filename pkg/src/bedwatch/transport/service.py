"""Socket-facing broker service and client.

The service wraps BrokerCore with TLS connections. Each connection has one
reader thread (which owns the socket lifecycle) and one writer thread fed
by a frame queue, so no two threads ever touch a socket syscall
concurrently. Publish authorization is identity-based: a cart may only
publish its own streams and only hears its own command queue; the server
identity may command any cart and consume anything.
"""

from __future__ import annotations

import logging
import queue
import socket
import ssl
import threading
import time
from dataclasses import dataclass, field

from ..core.clock import Clock, WallClock
from ..core.types import BedwatchError
from . import frames as fr
from .broker import BrokerCore, ProtocolViolation
from .routing import CONTROL_PREFIX, DATA_PREFIX, HEARTBEAT_PREFIX
from .tlschan import connect as tls_connect
from .tlschan import peer_identity, server_context

log = logging.getLogger(__name__)

SERVER_IDENTITY = "server"
PUMP_INTERVAL_S = 0.02


def authorize_publish(identity: str, key: str) -> bool:
    if identity == SERVER_IDENTITY:
        return True
    return key in (
        f"{CONTROL_PREFIX}.{identity}.resp",
        f"{HEARTBEAT_PREFIX}.{identity}.heartbeat",
    ) or key.startswith(f"{DATA_PREFIX}.{identity}.")


def authorize_subscribe(identity: str, queue_name: str) -> bool:
    if identity == SERVER_IDENTITY:
        return True
    return queue_name == f"{CONTROL_PREFIX}.{identity}.cmd"


@dataclass
class _Conn:
    sock: ssl.SSLSocket
    identity: str
    conn_id: int
    consumers: dict[str, str] = field(default_factory=dict)  # queue -> consumer_id
    outq: "queue.Queue" = field(default_factory=queue.Queue)
    last_seen: float = field(default_factory=time.monotonic)
    closed: bool = False

    def send(self, frame) -> None:
        """Queue a frame for the writer thread; never blocks, never raises."""
        self.outq.put(frame)


class BrokerService:
    def __init__(self, host: str, port: int, data_dir, creds_dir,
                 identity: str = "broker", ack_timeout_ms: int = 10_000,
                 clock: Clock | None = None):
        self.clock = clock or WallClock()
        self.core = BrokerCore(data_dir, ack_timeout_ms=ack_timeout_ms)
        self.lock = threading.Lock()
        self._ctx = server_context(creds_dir, identity)
        self._listener = socket.create_server((host, port))
        self.port = self._listener.getsockname()[1]
        self._conns: dict[int, _Conn] = {}
        self._next_conn_id = 1
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self) -> None:
        for target in (self._accept_loop, self._pump_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)

    def _accept_loop(self) -> None:
        self._listener.settimeout(0.2)
        while not self._stop.is_set():
            try:
                raw, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._serve_conn, args=(raw,), daemon=True).start()

    def _serve_conn(self, raw: socket.socket) -> None:
        try:
            tls = self._ctx.wrap_socket(raw, server_side=True)
            identity = peer_identity(tls)
        except (ssl.SSLError, ConnectionError, OSError) as exc:
            log.warning("handshake rejected: %s", exc)
            raw.close()
            return
        with self.lock:
            conn = _Conn(sock=tls, identity=identity, conn_id=self._next_conn_id)
            self._next_conn_id += 1
            self._conns[conn.conn_id] = conn
        log.info("peer connected: %s (conn %d)", identity, conn.conn_id)
        writer = threading.Thread(target=self._write_loop, args=(conn,), daemon=True)
        writer.start()
        try:
            self._read_loop(conn)
        finally:
            self._drop_conn(conn)
            writer.join(timeout=2.0)
            try:
                conn.sock.close()  # reader thread is the sole closer
            except OSError:
                pass

    def _write_loop(self, conn: _Conn) -> None:
        while not (conn.closed and conn.outq.empty()):
            try:
                frame = conn.outq.get(timeout=0.2)
            except queue.Empty:
                continue
            try:
                fr.write_frame(conn.sock, frame)
            except (OSError, ValueError):
                self._drop_conn(conn)
                return

    def _read_loop(self, conn: _Conn) -> None:
        conn.sock.settimeout(0.5)
        while not self._stop.is_set() and not conn.closed:
            try:
                frame = fr.read_frame(conn.sock)
            except (socket.timeout, TimeoutError):
                continue
            except ssl.SSLError as exc:
                if "timed out" in str(exc):
                    continue
                return
            except (ConnectionError, OSError, fr.FrameError):
                return
            conn.last_seen = time.monotonic()
            try:
                self._handle(conn, frame)
            except ProtocolViolation as exc:
                log.warning("protocol violation from %s: %s", conn.identity, exc)
                conn.send(fr.ProtocolError(fr.E_UNKNOWN_TAG, str(exc)))
                time.sleep(0.1)  # let the writer flush the error frame
                return

    def _handle(self, conn: _Conn, frame) -> None:
        if isinstance(frame, fr.Heartbeat):
            return
        if isinstance(frame, fr.Publish):
            if not authorize_publish(conn.identity, frame.routing_key):
                conn.send(fr.ProtocolError(fr.E_UNAUTHORIZED,
                                           f"{conn.identity} may not publish {frame.routing_key}"))
                raise ProtocolViolation("unauthorized publish")
            with self.lock:
                self.core.publish(frame.routing_key, frame.payload)
            conn.send(fr.PubAck(frame.publish_id))
            return
        if isinstance(frame, fr.Subscribe):
            if not authorize_subscribe(conn.identity, frame.queue):
                conn.send(fr.ProtocolError(fr.E_UNAUTHORIZED,
                                           f"{conn.identity} may not consume {frame.queue}"))
                raise ProtocolViolation("unauthorized subscribe")
            consumer_id = f"{conn.conn_id}:{frame.queue}"
            with self.lock:
                self.core.subscribe(frame.queue, consumer_id)
                conn.consumers[frame.queue] = consumer_id
            return
        if isinstance(frame, fr.Ack):
            with self.lock:
                for consumer_id in conn.consumers.values():
                    try:
                        self.core.ack(consumer_id, frame.tag)
                        return
                    except ProtocolViolation:
                        continue
            raise ProtocolViolation(f"ack of unknown delivery tag {frame.tag}")
        raise ProtocolViolation(f"unexpected frame {type(frame).__name__}")

    def _pump_loop(self) -> None:
        last_beat = 0.0
        while not self._stop.is_set():
            now_ms = self.clock.now_ms()
            with self.lock:
                self.core.requeue_timeouts(now_ms)
                deliveries = self.core.collect_deliveries(now_ms)
                by_consumer = {
                    cid: conn
                    for conn in self._conns.values()
                    for cid in conn.consumers.values()
                }
            for d in deliveries:
                conn = by_consumer.get(d.consumer_id)
                if conn is not None:
                    conn.send(fr.Deliver(d.tag, d.redelivered, d.payload))
                # a consumer that vanished mid-assignment is handled by
                # consumer_disconnected / ack-timeout requeue
            mono = time.monotonic()
            if mono - last_beat >= fr.HEARTBEAT_INTERVAL_S:
                last_beat = mono
                for conn in list(self._conns.values()):
                    if mono - conn.last_seen > fr.HEARTBEAT_INTERVAL_S * fr.MISSED_HEARTBEATS_DEAD:
                        log.warning("peer %s missed heartbeats; dropping", conn.identity)
                        self._drop_conn(conn)
                    else:
                        conn.send(fr.Heartbeat())
            time.sleep(PUMP_INTERVAL_S)

    def _drop_conn(self, conn: _Conn) -> None:
        """Deregister and wake the connection's threads; never closes the fd."""
        with self.lock:
            if conn.closed:
                return
            conn.closed = True
            self._conns.pop(conn.conn_id, None)
            for consumer_id in conn.consumers.values():
                self.core.consumer_disconnected(consumer_id)
        try:
            conn.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass

    def stop(self) -> None:
        self._stop.set()
        try:
            self._listener.close()
        except OSError:
            pass
        for conn in list(self._conns.values()):
            self._drop_conn(conn)
        time.sleep(0.1)
        with self.lock:
            self.core.close()


class BrokerTimeout(BedwatchError):
    pass


class BrokerClient:
    """Blocking publish plus callback-based consume over one TLS connection."""

    def __init__(self, host: str, port: int, creds_dir, identity: str,
                 expect_peer: str = "broker", timeout: float = 10.0):
        self.sock = tls_connect(host, port, creds_dir, identity, expect_peer, timeout)
        self.identity = identity
        self._wlock = threading.Lock()
        self._pending: dict[int, threading.Event] = {}
        self._next_publish_id = 1
        self._pub_lock = threading.Lock()
        self._handler = None
        self._closed = threading.Event()
        self._error: str | None = None
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._beater = threading.Thread(target=self._heartbeat_loop, daemon=True)
        self._beater.start()

    def _send(self, frame) -> None:
        if self._closed.is_set():
            raise ConnectionError(self._error or "client closed")
        with self._wlock:
            fr.write_frame(self.sock, frame)

    def _read_loop(self) -> None:
        self.sock.settimeout(0.5)
        while not self._closed.is_set():
            try:
                frame = fr.read_frame(self.sock)
            except (socket.timeout, TimeoutError):
                continue
            except ssl.SSLError as exc:
                if "timed out" in str(exc):
                    continue
                break
            except (ConnectionError, OSError, fr.FrameError):
                break
            if isinstance(frame, fr.PubAck):
                ev = self._pending.pop(frame.publish_id, None)
                if ev:
                    ev.set()
            elif isinstance(frame, fr.Deliver):
                if self._handler is not None:
                    try:
                        self._handler(frame.tag, frame.redelivered, frame.payload)
                    except Exception:
                        log.exception("consumer handler failed")
            elif isinstance(frame, fr.ProtocolError):
                self._error = frame.message
                break
            # Heartbeat needs no action beyond the read itself
        self._closed.set()
        for ev in self._pending.values():
            ev.set()

    def _heartbeat_loop(self) -> None:
        while not self._closed.wait(fr.HEARTBEAT_INTERVAL_S):
            try:
                self._send(fr.Heartbeat())
            except (OSError, ConnectionError):
                return

    def publish(self, routing_key: str, payload: bytes, timeout: float = 10.0) -> None:
        with self._pub_lock:
            pid = self._next_publish_id
            self._next_publish_id += 1
        ev = threading.Event()
        self._pending[pid] = ev
        self._send(fr.Publish(pid, routing_key, payload))
        if not ev.wait(timeout):
            self._pending.pop(pid, None)
            raise BrokerTimeout(f"no publish confirm within {timeout}s")
        if self._closed.is_set():
            raise ConnectionError(self._error or "connection lost before confirm")

    def subscribe(self, queue_name: str, handler) -> None:
        """handler(tag, redelivered, payload); ack via client.ack(tag).

        DELIVER frames carry no queue id, so one client holds at most one
        subscription; open one connection per consumed queue.
        """
        if self._handler is not None:
            raise BedwatchError("client already subscribed; use one client per queue")
        self._handler = handler
        self._send(fr.Subscribe(queue_name))

    def ack(self, tag: int) -> None:
        self._send(fr.Ack(tag))

    @property
    def connected(self) -> bool:
        return not self._closed.is_set()

    @property
    def last_error(self) -> str | None:
        return self._error

    def close(self) -> None:
        self._closed.set()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._reader.join(timeout=2.0)
        self._beater.join(timeout=3.0)
        try:
            self.sock.close()
        except OSError:
            pass
