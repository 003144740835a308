"""Crash-safe per-sensor sequence counters.

A counter value is persisted *before* next_seq returns, so a crash at any
point can never hand out the same seq twice. The stream stays gap-free
because exactly the returned value is persisted (no block reservation).
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

from .types import BedwatchError

_REC = struct.Struct(">Q")
_COMPACT_BYTES = 64 * 1024


class CounterStorageError(BedwatchError):
    """The counter file could not be written; the counter is unchanged."""


class SeqCounter:
    """File-backed monotone counter, single writer per sensor.

    The file is an append-only sequence of 8-byte big-endian values; the
    last complete record is the current value. A torn trailing record
    (crash mid-append) is ignored on open: the append is only considered
    durable once next_seq has returned.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._value = 0
        if self.path.exists():
            data = self.path.read_bytes()
            whole = len(data) - (len(data) % _REC.size)
            if whole:
                self._value = _REC.unpack_from(data, whole - _REC.size)[0]
        self._fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)

    @property
    def value(self) -> int:
        return self._value

    def next_seq(self) -> int:
        nxt = self._value + 1
        try:
            os.write(self._fd, _REC.pack(nxt))
            os.fsync(self._fd)
        except OSError as exc:
            raise CounterStorageError(f"cannot persist counter {self.path}: {exc}") from exc
        self._value = nxt
        if self.path.stat().st_size >= _COMPACT_BYTES:
            self._compact()
        return nxt

    def _compact(self):
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            fh.write(_REC.pack(self._value))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)
        dir_fd = os.open(self.path.parent, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)
        os.close(self._fd)
        self._fd = os.open(self.path, os.O_WRONLY | os.O_APPEND)

    def close(self):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
