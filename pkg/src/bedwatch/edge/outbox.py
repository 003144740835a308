"""Crash-safe outbox: the local cache that makes zero-loss possible.

Envelopes are appended (and fsynced) before enqueue returns; entries move
pending -> acked only after the broker confirms receipt. The acked prefix
is compacted away periodically so the log does not grow without bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..core.recordlog import RecordLog
from ..core.types import BedwatchError

_REC_DATA = 0
_REC_ACK = 1

STATUS_PENDING = "pending"
STATUS_ACKED = "acked"


class OutboxError(BedwatchError):
    pass


@dataclass
class OutboxEntry:
    entry_id: int
    envelope_bytes: bytes
    status: str
    enqueue_ts: int


class Outbox:
    """Append-only outbox log for one sensor partition (single writer)."""

    def __init__(self, path: str | Path, compact_after_acked: int = 256):
        self.path = Path(path)
        self.compact_after_acked = compact_after_acked
        self._log = RecordLog(self.path)
        self._entries: dict[int, OutboxEntry] = {}
        self._order: list[int] = []
        self._next_id = 1
        for rtype, body in self._log.replay():
            if rtype == _REC_DATA:
                entry_id = int.from_bytes(body[:8], "big")
                ts = int.from_bytes(body[8:16], "big", signed=True)
                self._entries[entry_id] = OutboxEntry(entry_id, body[16:], STATUS_PENDING, ts)
                self._order.append(entry_id)
                self._next_id = max(self._next_id, entry_id + 1)
            elif rtype == _REC_ACK:
                entry_id = int.from_bytes(body[:8], "big")
                if entry_id in self._entries:
                    self._entries[entry_id].status = STATUS_ACKED

    def enqueue(self, envelope_bytes: bytes, enqueue_ts: int) -> int:
        """Durable before return; raises rather than silently dropping."""
        entry_id = self._next_id
        body = entry_id.to_bytes(8, "big") + enqueue_ts.to_bytes(8, "big", signed=True) + envelope_bytes
        try:
            self._log.append(_REC_DATA, body)
        except OSError as exc:
            raise OutboxError(f"outbox append failed: {exc}") from exc
        self._next_id += 1
        self._entries[entry_id] = OutboxEntry(entry_id, envelope_bytes, STATUS_PENDING, enqueue_ts)
        self._order.append(entry_id)
        return entry_id

    def pending(self) -> list[OutboxEntry]:
        """Pending entries in enqueue order."""
        return [self._entries[i] for i in self._order if self._entries[i].status == STATUS_PENDING]

    def pending_count(self) -> int:
        return sum(1 for i in self._order if self._entries[i].status == STATUS_PENDING)

    def oldest_pending_ts(self) -> int | None:
        for i in self._order:
            if self._entries[i].status == STATUS_PENDING:
                return self._entries[i].enqueue_ts
        return None

    def mark_acked(self, entry_id: int) -> None:
        entry = self._entries.get(entry_id)
        if entry is None:
            raise OutboxError(f"unknown outbox entry {entry_id}")
        if entry.status == STATUS_ACKED:
            return
        self._log.append(_REC_ACK, entry_id.to_bytes(8, "big"), sync=False)
        entry.status = STATUS_ACKED
        if self._acked_count() >= self.compact_after_acked:
            self.compact()

    def _acked_count(self) -> int:
        return sum(1 for i in self._order if self._entries[i].status == STATUS_ACKED)

    def compact(self) -> None:
        """Drop acked entries, keeping pending ones in order."""
        keep = [i for i in self._order if self._entries[i].status == STATUS_PENDING]
        records = []
        for entry_id in keep:
            e = self._entries[entry_id]
            records.append(
                (
                    _REC_DATA,
                    entry_id.to_bytes(8, "big")
                    + e.enqueue_ts.to_bytes(8, "big", signed=True)
                    + e.envelope_bytes,
                )
            )
        self._log.rewrite(records)
        self._entries = {i: self._entries[i] for i in keep}
        self._order = keep

    @property
    def size_bytes(self) -> int:
        return self._log.size_bytes

    def close(self) -> None:
        self._log.close()
