"""Clock abstraction so the whole system can run on simulated time.

Every component takes a Clock instead of calling time.time(); test mode
swaps in SimClock and the entire edge/broker/server topology becomes a
deterministic function of its inputs.
"""

from __future__ import annotations

import time


class Clock:
    def now_ms(self) -> int:
        raise NotImplementedError

    def sleep(self, seconds: float) -> None:
        raise NotImplementedError


class WallClock(Clock):
    def now_ms(self) -> int:
        return int(time.time() * 1000)

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class SimClock(Clock):
    """Manually advanced clock; sleep() advances time instead of blocking."""

    def __init__(self, start_ms: int = 0):
        self._now = start_ms

    def now_ms(self) -> int:
        return self._now

    def sleep(self, seconds: float) -> None:
        self.advance_ms(int(seconds * 1000))

    def advance_ms(self, delta_ms: int) -> None:
        if delta_ms < 0:
            raise ValueError("simulated time cannot move backwards")
        self._now += delta_ms

    def set_ms(self, now_ms: int) -> None:
        self._now = now_ms


class SkewedClock(Clock):
    """Wrapper that applies an adjustable offset; used for clock-skew faults."""

    def __init__(self, base: Clock, offset_ms: int = 0):
        self.base = base
        self.offset_ms = offset_ms

    def now_ms(self) -> int:
        return self.base.now_ms() + self.offset_ms

    def sleep(self, seconds: float) -> None:
        self.base.sleep(seconds)
