"""Durable message broker: per-key queues with at-least-once delivery.

The core is sans-IO and single-threaded; the socket service wraps it with a
lock, and the simulation harness drives it directly for deterministic
fault-schedule runs. Message bodies are fsynced before publish returns, so
a broker restart loses nothing that was ever acknowledged to a producer.
Consume/delivery markers are written without fsync: losing one merely
causes a redelivery, which the idempotent ingest absorbs.
"""

from __future__ import annotations

import logging
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from ..core.recordlog import RecordLog
from ..core.types import BedwatchError

log = logging.getLogger(__name__)

_REC_MSG = 0
_REC_CONSUMED = 1
_REC_DELIVERED = 2

DEFAULT_ACK_TIMEOUT_MS = 10_000
DEFAULT_PREFETCH = 64
_COMPACT_CONSUMED = 512

_SAFE_KEY = re.compile(r"^[A-Za-z0-9._-]+$")


class ProtocolViolation(BedwatchError):
    """Consumer misbehaved (e.g. acked an unknown tag); connection must close."""


@dataclass
class _Message:
    msg_id: int
    payload: bytes
    delivered_once: bool = False


@dataclass
class _Queue:
    name: str
    log: RecordLog
    messages: dict[int, _Message] = field(default_factory=dict)
    ready: deque = field(default_factory=deque)  # msg_ids awaiting delivery
    outstanding: dict[int, tuple[int, int, str]] = field(default_factory=dict)
    # tag -> (msg_id, deadline_ms, consumer_id)
    next_msg_id: int = 1
    next_tag: int = 1
    consumed_since_compact: int = 0
    consumers: list[str] = field(default_factory=list)
    rr_index: int = 0


@dataclass(frozen=True)
class Delivery:
    consumer_id: str
    queue: str
    tag: int
    redelivered: bool
    payload: bytes


class BrokerCore:
    """State machine for all queues; one writer at a time."""

    def __init__(self, data_dir: str | Path, ack_timeout_ms: int = DEFAULT_ACK_TIMEOUT_MS,
                 prefetch: int = DEFAULT_PREFETCH):
        self.data_dir = Path(data_dir)
        self.ack_timeout_ms = ack_timeout_ms
        self.prefetch = prefetch
        self._queues: dict[str, _Queue] = {}
        self._consumer_queue: dict[str, str] = {}
        self._consumer_load: dict[str, int] = {}
        (self.data_dir / "queues").mkdir(parents=True, exist_ok=True)
        for path in sorted((self.data_dir / "queues").glob("*.log")):
            self._open_queue(path.stem)

    def _open_queue(self, name: str) -> _Queue:
        q = self._queues.get(name)
        if q is not None:
            return q
        if not _SAFE_KEY.match(name):
            raise BedwatchError(f"unsafe routing key {name!r}")
        q = _Queue(name=name, log=RecordLog(self.data_dir / "queues" / f"{name}.log"))
        consumed: set[int] = set()
        delivered: set[int] = set()
        msgs: dict[int, bytes] = {}
        order: list[int] = []
        for rtype, body in q.log.replay():
            msg_id = int.from_bytes(body[:8], "big")
            if rtype == _REC_MSG:
                msgs[msg_id] = body[8:]
                order.append(msg_id)
                q.next_msg_id = max(q.next_msg_id, msg_id + 1)
            elif rtype == _REC_CONSUMED:
                consumed.add(msg_id)
            elif rtype == _REC_DELIVERED:
                delivered.add(msg_id)
        for msg_id in order:
            if msg_id in consumed:
                continue
            q.messages[msg_id] = _Message(msg_id, msgs[msg_id], delivered_once=msg_id in delivered)
            q.ready.append(msg_id)
        self._queues[name] = q
        return q

    # -- producer side ------------------------------------------------------

    def publish(self, routing_key: str, payload: bytes) -> None:
        """Durable before return."""
        q = self._open_queue(routing_key)
        msg_id = q.next_msg_id
        q.next_msg_id += 1
        q.log.append(_REC_MSG, msg_id.to_bytes(8, "big") + payload)
        q.messages[msg_id] = _Message(msg_id, payload)
        q.ready.append(msg_id)

    # -- consumer side ------------------------------------------------------

    def subscribe(self, queue: str, consumer_id: str) -> None:
        if consumer_id in self._consumer_queue:
            raise ProtocolViolation(f"consumer {consumer_id!r} already subscribed")
        q = self._open_queue(queue)
        q.consumers.append(consumer_id)
        self._consumer_queue[consumer_id] = queue
        self._consumer_load[consumer_id] = 0

    def consumer_disconnected(self, consumer_id: str) -> None:
        queue = self._consumer_queue.pop(consumer_id, None)
        self._consumer_load.pop(consumer_id, None)
        if queue is None:
            return
        q = self._queues[queue]
        q.consumers.remove(consumer_id)
        stale = [tag for tag, (_, _, cid) in q.outstanding.items() if cid == consumer_id]
        for tag in stale:
            msg_id, _, _ = q.outstanding.pop(tag)
            if msg_id in q.messages:
                q.messages[msg_id].delivered_once = True
                q.ready.appendleft(msg_id)

    def collect_deliveries(self, now_ms: int) -> list[Delivery]:
        """Assign ready messages to consumers (FIFO, round-robin, prefetch-capped)."""
        out: list[Delivery] = []
        for q in self._queues.values():
            while q.ready and q.consumers:
                consumer = None
                for i in range(len(q.consumers)):
                    cand = q.consumers[(q.rr_index + i) % len(q.consumers)]
                    if self._consumer_load[cand] < self.prefetch:
                        consumer = cand
                        q.rr_index = (q.rr_index + i + 1) % len(q.consumers)
                        break
                if consumer is None:
                    break
                msg_id = q.ready.popleft()
                msg = q.messages[msg_id]
                tag = q.next_tag
                q.next_tag += 1
                redelivered = msg.delivered_once
                if not msg.delivered_once:
                    msg.delivered_once = True
                    q.log.append(_REC_DELIVERED, msg_id.to_bytes(8, "big"), sync=False)
                q.outstanding[tag] = (msg_id, now_ms + self.ack_timeout_ms, consumer)
                self._consumer_load[consumer] += 1
                out.append(Delivery(consumer, q.name, tag, redelivered, msg.payload))
        return out

    def ack(self, consumer_id: str, tag: int) -> None:
        queue = self._consumer_queue.get(consumer_id)
        if queue is None:
            raise ProtocolViolation(f"ack from unknown consumer {consumer_id!r}")
        q = self._queues[queue]
        entry = q.outstanding.get(tag)
        if entry is None or entry[2] != consumer_id:
            raise ProtocolViolation(f"ack of unknown delivery tag {tag}")
        msg_id, _, _ = q.outstanding.pop(tag)
        self._consumer_load[consumer_id] -= 1
        q.log.append(_REC_CONSUMED, msg_id.to_bytes(8, "big"), sync=False)
        q.messages.pop(msg_id, None)
        q.consumed_since_compact += 1
        if q.consumed_since_compact >= _COMPACT_CONSUMED:
            self._compact(q)

    def requeue_timeouts(self, now_ms: int) -> int:
        """Redeliver outstanding messages whose ack deadline passed."""
        requeued = 0
        for q in self._queues.values():
            expired = [tag for tag, (_, deadline, _) in q.outstanding.items() if deadline <= now_ms]
            for tag in sorted(expired):
                msg_id, _, consumer = q.outstanding.pop(tag)
                self._consumer_load[consumer] -= 1
                if msg_id in q.messages:
                    q.ready.appendleft(msg_id)
                    requeued += 1
        return requeued

    # -- maintenance --------------------------------------------------------

    def _compact(self, q: _Queue) -> None:
        records = []
        for msg_id, msg in sorted(q.messages.items()):
            records.append((_REC_MSG, msg_id.to_bytes(8, "big") + msg.payload))
            if msg.delivered_once:
                records.append((_REC_DELIVERED, msg_id.to_bytes(8, "big")))
        q.log.rewrite(records)
        q.consumed_since_compact = 0

    def queue_depth(self, routing_key: str) -> int:
        q = self._queues.get(routing_key)
        return len(q.messages) if q else 0

    def queues(self) -> list[str]:
        return sorted(self._queues)

    def close(self) -> None:
        for q in self._queues.values():
            q.log.sync()
            q.log.close()
        self._queues.clear()
