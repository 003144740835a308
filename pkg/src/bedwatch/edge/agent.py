"""The cart process: generate, tag, seal, enqueue, publish, obey commands.

The agent is deliberately sans-IO: it is driven by step(now_ms) calls and a
pluggable publish channel, so the same code runs under the deterministic
simulation harness and the real socket service.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from ..core.clock import Clock
from ..core.codec import encode_envelope
from ..core.counters import SeqCounter
from ..core.types import (
    BedwatchError,
    CartState,
    CipherInfo,
    Modality,
    RecordEnvelope,
    RecordKey,
    RecordingState,
)
from ..transport import routing
from .control import ControlCommand, apply_control
from .outbox import Outbox
from .sealing import CODEC_ZLIB, deterministic_nonce, seal_envelope
from .sim import SensorSimConfig, generate_tick

log = logging.getLogger(__name__)

BACKOFF_BASE_MS = 500
BACKOFF_CAP_MS = 30_000
BACKOFF_JITTER = 0.2
MAX_CLOCK_REGRESSION_MS = 1000
HEARTBEAT_INTERVAL_MS = 2000


class ClockRegressionError(BedwatchError):
    """The clock moved backwards more than the tolerated second."""


class ChannelDown(BedwatchError):
    """The publish channel is unavailable; entries stay pending."""


def tag_metadata(
    raw: bytes,
    cart_id: str,
    room_id: str,
    sensor_id: str,
    modality: Modality,
    counter: SeqCounter,
    clock: Clock,
    last_capture_ts: int | None = None,
) -> RecordEnvelope:
    """Build an unsealed envelope with fresh seq and a monotone capture_ts."""
    now = clock.now_ms()
    if last_capture_ts is not None:
        if now < last_capture_ts - MAX_CLOCK_REGRESSION_MS:
            raise ClockRegressionError(
                f"clock went back {last_capture_ts - now} ms on {sensor_id}; refusing to emit"
            )
        now = max(now, last_capture_ts)
    seq = counter.next_seq()
    return RecordEnvelope(
        key=RecordKey(cart_id=cart_id, sensor_id=sensor_id, seq=seq),
        capture_ts=now,
        room_id=room_id,
        modality=modality,
        codec_id="raw",
        cipher=CipherInfo(),
        payload=raw,
        payload_hash=hashlib.sha256(raw).digest(),
    )


@dataclass
class _SensorRuntime:
    config: SensorSimConfig
    index: int
    counter: SeqCounter
    outbox: Outbox
    last_capture_ts: int | None = None
    next_tick: int = 0


@dataclass
class Backoff:
    """Capped exponential backoff with symmetric jitter."""

    rng_seed: int
    base_ms: int = BACKOFF_BASE_MS
    cap_ms: int = BACKOFF_CAP_MS
    jitter: float = BACKOFF_JITTER
    attempt: int = 0
    not_before_ms: int = 0
    _state: int = field(init=False, default=0)

    def __post_init__(self):
        self._state = (self.rng_seed * 2654435761 + 1) % 2**32

    def _next_unit(self) -> float:
        # xorshift keeps the jitter stream independent of global RNG state
        x = self._state or 1
        x ^= (x << 13) & 0xFFFFFFFF
        x ^= x >> 17
        x ^= (x << 5) & 0xFFFFFFFF
        self._state = x
        return x / 2**32

    def failure(self, now_ms: int) -> None:
        delay = min(self.cap_ms, self.base_ms * (2**self.attempt))
        delay *= 1.0 + self.jitter * (2.0 * self._next_unit() - 1.0)
        self.attempt += 1
        self.not_before_ms = now_ms + int(delay)

    def success(self) -> None:
        self.attempt = 0
        self.not_before_ms = 0

    def ready(self, now_ms: int) -> bool:
        return now_ms >= self.not_before_ms


class EdgeAgent:
    """One cart: several simulated sensors, one outbox partition each."""

    def __init__(
        self,
        cart_id: str,
        room_id: str,
        sensors: list[SensorSimConfig],
        state_dir: str | Path,
        key: bytes,
        key_id: str,
        clock: Clock,
        start_ms: int | None = None,
    ):
        self.cart_id = cart_id
        self.room_id = room_id
        self.clock = clock
        self.key = key
        self.key_id = key_id
        self.state = CartState()
        self.start_ms = clock.now_ms() if start_ms is None else start_ms
        self.backoff = Backoff(rng_seed=sum(s.seed for s in sensors) + len(cart_id))
        self._last_heartbeat_ms: int | None = None
        self.dropped_ticks = 0
        self.on_enqueue = None  # optional hook(envelope), fired after durable enqueue

        state_dir = Path(state_dir)
        self.sensors: list[_SensorRuntime] = []
        for idx, cfg in enumerate(sensors):
            self.sensors.append(
                _SensorRuntime(
                    config=cfg,
                    index=idx,
                    counter=SeqCounter(state_dir / "counters" / f"{cfg.sensor_id}.seq"),
                    outbox=Outbox(state_dir / "outbox" / f"{cfg.sensor_id}.log"),
                )
            )
        # resume paused tick positions after a crash: derive from time below

    # -- production ---------------------------------------------------------

    def _period_ms(self, cfg: SensorSimConfig) -> int:
        return max(1, int(round(1000.0 / cfg.modality.envelope_rate_hz)))

    def produce_due(self, now_ms: int | None = None) -> int:
        """Generate, tag, seal, enqueue every tick due by now. Returns count."""
        now = self.clock.now_ms() if now_ms is None else now_ms
        produced = 0
        for rt in self.sensors:
            period = self._period_ms(rt.config)
            due = (now - self.start_ms) // period
            while rt.next_tick <= due:
                tick = rt.next_tick
                rt.next_tick += 1
                if self.state.recording is not RecordingState.RECORDING:
                    self.dropped_ticks += 1
                    continue
                raw = generate_tick(rt.config, tick)
                try:
                    env = tag_metadata(
                        raw,
                        self.cart_id,
                        self.room_id,
                        rt.config.sensor_id,
                        rt.config.modality,
                        rt.counter,
                        self.clock,
                        rt.last_capture_ts,
                    )
                except ClockRegressionError as exc:
                    log.warning("tick dropped: %s", exc)
                    continue
                rt.last_capture_ts = env.capture_ts
                sealed = seal_envelope(
                    env, CODEC_ZLIB, self.key, self.key_id,
                    deterministic_nonce(rt.index, env.key.seq),
                )
                rt.outbox.enqueue(encode_envelope(sealed), env.capture_ts)
                if self.on_enqueue is not None:
                    self.on_enqueue(sealed)
                produced += 1
        return produced

    # -- publishing ---------------------------------------------------------

    def publish_pending(self, channel, now_ms: int | None = None) -> int:
        """Send pending entries in seq order; ack only on broker confirm.

        ``channel.publish(routing_key, payload)`` must raise ChannelDown on
        failure. Returns the number of entries acknowledged.
        """
        now = self.clock.now_ms() if now_ms is None else now_ms
        if not self.backoff.ready(now):
            return 0
        sent = 0
        for rt in self.sensors:
            key = routing.data_key(self.cart_id, rt.config.modality)
            for entry in rt.outbox.pending():
                try:
                    channel.publish(key, entry.envelope_bytes)
                except ChannelDown:
                    self.backoff.failure(now)
                    return sent
                rt.outbox.mark_acked(entry.entry_id)
                sent += 1
        if sent:
            self.backoff.success()
        return sent

    def heartbeat_due(self, now_ms: int) -> bool:
        if self._last_heartbeat_ms is None:
            return True
        return now_ms - self._last_heartbeat_ms >= HEARTBEAT_INTERVAL_MS

    def heartbeat_payload(self, now_ms: int) -> bytes:
        self._last_heartbeat_ms = now_ms
        doc = {
            "cart_id": self.cart_id,
            "room_id": self.room_id,
            "ts": now_ms,
            "state": self.state.to_dict(),
            "sensors": [
                {"sensor_id": rt.config.sensor_id, "modality": rt.config.modality.value}
                for rt in self.sensors
            ],
        }
        return json.dumps(doc, sort_keys=True).encode()

    # -- control ------------------------------------------------------------

    def handle_command(self, cmd: ControlCommand) -> CartState:
        self.state = apply_control(self.state, cmd)
        return self.state

    # -- introspection ------------------------------------------------------

    def pending_depths(self) -> dict[str, int]:
        return {rt.config.sensor_id: rt.outbox.pending_count() for rt in self.sensors}

    def oldest_pending_age_ms(self, now_ms: int) -> dict[str, int]:
        out = {}
        for rt in self.sensors:
            ts = rt.outbox.oldest_pending_ts()
            if ts is not None:
                out[rt.config.sensor_id] = now_ms - ts
        return out

    def close(self) -> None:
        for rt in self.sensors:
            rt.counter.close()
            rt.outbox.close()
