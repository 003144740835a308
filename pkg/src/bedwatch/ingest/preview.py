"""Live preview fan-out: latest-frame cells with drop semantics.

Each cart has a single cell holding its most recent decoded RGB frame.
Subscribers poll the cell; a slow subscriber simply skips frames, so
backlog can never grow. Previews are never persisted.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass


@dataclass
class PreviewFrame:
    frame_no: int
    capture_ts: int
    png: bytes


class PreviewHub:
    def __init__(self):
        self._cells: dict[str, PreviewFrame] = {}
        self._cond = threading.Condition()

    def publish(self, cart_id: str, capture_ts: int, png: bytes) -> None:
        with self._cond:
            prev = self._cells.get(cart_id)
            frame_no = (prev.frame_no + 1) if prev else 1
            self._cells[cart_id] = PreviewFrame(frame_no, capture_ts, png)
            self._cond.notify_all()

    def latest(self, cart_id: str) -> PreviewFrame | None:
        with self._cond:
            return self._cells.get(cart_id)

    def next_frame(self, cart_id: str, after_frame_no: int, timeout: float) -> PreviewFrame | None:
        """Block until a frame newer than after_frame_no exists, else None.

        Only ever returns the latest frame: intermediate frames produced
        while the caller was away are dropped, not queued.
        """
        end = time.monotonic() + timeout
        with self._cond:
            while True:
                cur = self._cells.get(cart_id)
                if cur is not None and cur.frame_no > after_frame_no:
                    return cur
                remaining = end - time.monotonic()
                if remaining <= 0:
                    return None
                self._cond.wait(remaining)
