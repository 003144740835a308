"""Cart and sensor health: live / stale / offline.

A sensor is stale once nothing has arrived for five nominal envelope
periods (with a 2 s floor); a cart is offline after 10 s without a
heartbeat, which also marks all its sensors offline. The cart rollup is
the worst state across its sensors.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from ..core.types import Modality

LIVE = "live"
STALE = "stale"
OFFLINE = "offline"

STALE_PERIODS = 5
STALE_FLOOR_MS = 2000
OFFLINE_AFTER_MS = 10_000

_RANK = {LIVE: 0, STALE: 1, OFFLINE: 2}


def stale_threshold_ms(modality: Modality) -> int:
    period_ms = 1000.0 / modality.envelope_rate_hz
    return int(max(STALE_PERIODS * period_ms, STALE_FLOOR_MS))


@dataclass
class SensorHealth:
    sensor_id: str
    modality: Modality
    last_seen_ts: int | None = None

    def state(self, now_ms: int, cart_offline: bool) -> str:
        if cart_offline:
            return OFFLINE
        if self.last_seen_ts is None:
            return STALE
        if now_ms - self.last_seen_ts > stale_threshold_ms(self.modality):
            return STALE
        return LIVE


@dataclass
class CartHealth:
    cart_id: str
    room_id: str = ""
    last_heartbeat_ts: int | None = None
    recording: str = "stopped"
    sensors: dict[str, SensorHealth] = field(default_factory=dict)

    def offline(self, now_ms: int) -> bool:
        return self.last_heartbeat_ts is None or now_ms - self.last_heartbeat_ts > OFFLINE_AFTER_MS

    def rollup(self, now_ms: int) -> str:
        if self.offline(now_ms):
            return OFFLINE
        states = [s.state(now_ms, False) for s in self.sensors.values()]
        if not states:
            return LIVE
        return max(states, key=_RANK.__getitem__)


class HealthRegistry:
    """Single-writer registry updated on every ingest and heartbeat."""

    def __init__(self):
        self._carts: dict[str, CartHealth] = {}
        self._lock = threading.Lock()

    def on_ingest(self, cart_id: str, sensor_id: str, modality: Modality, now_ms: int) -> None:
        with self._lock:
            cart = self._carts.setdefault(cart_id, CartHealth(cart_id))
            sensor = cart.sensors.setdefault(sensor_id, SensorHealth(sensor_id, modality))
            sensor.last_seen_ts = now_ms

    def on_heartbeat(self, cart_id: str, room_id: str, recording: str, now_ms: int,
                     sensors: list[dict] | None = None) -> None:
        with self._lock:
            cart = self._carts.setdefault(cart_id, CartHealth(cart_id))
            cart.room_id = room_id
            cart.recording = recording
            cart.last_heartbeat_ts = now_ms
            for s in sensors or []:
                cart.sensors.setdefault(
                    s["sensor_id"], SensorHealth(s["sensor_id"], Modality(s["modality"]))
                )

    def snapshot(self, now_ms: int) -> dict[str, dict]:
        with self._lock:
            out = {}
            for cart_id, cart in self._carts.items():
                offline = cart.offline(now_ms)
                out[cart_id] = {
                    "cart_id": cart_id,
                    "room_id": cart.room_id,
                    "recording": cart.recording,
                    "rollup": cart.rollup(now_ms),
                    "last_heartbeat_ts": cart.last_heartbeat_ts,
                    "sensors": [
                        {
                            "sensor_id": s.sensor_id,
                            "modality": s.modality.value,
                            "last_seen_ts": s.last_seen_ts,
                            "state": s.state(now_ms, offline),
                        }
                        for s in cart.sensors.values()
                    ],
                }
            return out

    def cart(self, cart_id: str, now_ms: int) -> dict | None:
        return self.snapshot(now_ms).get(cart_id)
