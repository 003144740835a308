"""Append-only durable record log.

Shared primitive behind the edge outbox and the broker's per-queue logs.
Records are length-prefixed and CRC-guarded; a torn tail (crash mid-append)
is detected and dropped on open, which is safe because append() only
returns after fsync.
"""

from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path
from typing import Iterator

from .types import BedwatchError

_HDR = struct.Struct(">IB")  # body length, record type
_CRC = struct.Struct(">I")
_MAX_BODY = 64 * 1024 * 1024


class LogCorruptError(BedwatchError):
    """A non-tail record failed its CRC; the log is damaged."""


class RecordLog:
    """Single-writer append-only log of (type, body) records."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fd = os.open(self.path, os.O_RDWR | os.O_CREAT, 0o644)
        self._size = self._recover()

    def _recover(self) -> int:
        """Scan existing records, truncating a torn tail if present."""
        size = os.fstat(self._fd).st_size
        good_end = 0
        for _, _, end in self._scan():
            good_end = end
        if good_end != size:
            os.ftruncate(self._fd, good_end)
            os.fsync(self._fd)
        os.lseek(self._fd, good_end, os.SEEK_SET)
        return good_end

    def _scan(self) -> Iterator[tuple[int, bytes, int]]:
        """Yield (type, body, end_offset) for each complete valid record."""
        data = Path(self.path).read_bytes()
        pos = 0
        while True:
            if pos + _HDR.size > len(data):
                return
            length, rtype = _HDR.unpack_from(data, pos)
            if length > _MAX_BODY:
                return  # treat as torn garbage tail
            end = pos + _HDR.size + length + _CRC.size
            if end > len(data):
                return
            body = data[pos + _HDR.size : pos + _HDR.size + length]
            (crc,) = _CRC.unpack_from(data, end - _CRC.size)
            if crc != zlib.crc32(bytes([rtype]) + body):
                if end == len(data):
                    return  # torn tail record
                raise LogCorruptError(f"bad CRC mid-log at offset {pos} in {self.path}")
            yield rtype, body, end
            pos = end

    def replay(self) -> Iterator[tuple[int, bytes]]:
        for rtype, body, _ in self._scan():
            yield rtype, body

    def append(self, rtype: int, body: bytes, sync: bool = True) -> None:
        """Durable before return when sync is True."""
        if len(body) > _MAX_BODY:
            raise BedwatchError(f"record body too large: {len(body)}")
        rec = _HDR.pack(len(body), rtype) + body + _CRC.pack(zlib.crc32(bytes([rtype]) + body))
        os.write(self._fd, rec)
        if sync:
            os.fsync(self._fd)
        self._size += len(rec)

    def sync(self) -> None:
        os.fsync(self._fd)

    @property
    def size_bytes(self) -> int:
        return self._size

    def rewrite(self, records: list[tuple[int, bytes]]) -> None:
        """Atomically replace the log contents (compaction)."""
        tmp = self.path.with_suffix(self.path.suffix + ".compact")
        with open(tmp, "wb") as fh:
            for rtype, body in records:
                fh.write(
                    _HDR.pack(len(body), rtype)
                    + body
                    + _CRC.pack(zlib.crc32(bytes([rtype]) + body))
                )
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)
        dir_fd = os.open(self.path.parent, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)
        os.close(self._fd)
        self._fd = os.open(self.path, os.O_RDWR | os.O_APPEND)
        self._size = os.fstat(self._fd).st_size

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
