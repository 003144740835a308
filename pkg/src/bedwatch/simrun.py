"""Deterministic single-process topology: carts, broker and server on a
simulated clock.

Everything stateful is the real implementation (real outbox files, real
broker queue logs, real storage manifests); only sockets and wall time are
replaced, so fault schedules replay bit-identically and a multi-minute run
finishes in seconds.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .core.clock import SimClock, SkewedClock
from .core.types import CartState, PatientSession, RecordKey
from .edge.agent import ChannelDown, EdgeAgent
from .edge.control import ControlCommand
from .edge.sim import SensorSimConfig
from .ingest.health import HealthRegistry
from .ingest.pipeline import ACK, IngestPipeline
from .ingest.sessions import SessionMap
from .ingest.storage import RecordStore
from .transport import routing
from .transport.broker import BrokerCore

log = logging.getLogger(__name__)

FAULT_NET_DOWN = "net-down"
FAULT_CRASH = "crash"
FAULT_CLOCK_SKEW = "clock-skew"

DRAIN_LIMIT_S = 600


@dataclass(frozen=True)
class SimFault:
    kind: str
    cart_id: str
    at_s: int
    duration_s: int = 0
    skew_ms: int = 0

    def __post_init__(self):
        if self.kind not in (FAULT_NET_DOWN, FAULT_CRASH, FAULT_CLOCK_SKEW):
            raise ValueError(f"unknown fault kind {self.kind!r}")


@dataclass(frozen=True)
class SimControl:
    at_s: int
    cart_id: str
    command: ControlCommand


@dataclass
class SimCartSpec:
    cart_id: str
    room_id: str
    sensors: list[SensorSimConfig]
    key: bytes
    key_id: str


@dataclass
class SimResult:
    enqueued_keys: set[RecordKey] = field(default_factory=set)
    stored_keys: set[RecordKey] = field(default_factory=set)
    manifest_key_count: int = 0
    quarantined: int = 0
    duplicates_acked: int = 0
    max_pending_depth: dict[str, int] = field(default_factory=dict)
    max_pending_age_ms: dict[str, int] = field(default_factory=dict)
    drained: bool = False
    sim_seconds: int = 0
    final_states: dict[str, CartState] = field(default_factory=dict)
    health: dict = field(default_factory=dict)

    @property
    def zero_loss(self) -> bool:
        return self.drained and self.enqueued_keys == self.stored_keys

    @property
    def manifest_duplicates(self) -> int:
        return self.manifest_key_count - len(self.stored_keys)


class _SimChannel:
    """Publish channel bound to one cart's (possibly down) link."""

    def __init__(self, broker: BrokerCore):
        self.broker = broker
        self.down_until_s = -1
        self.fail_after: int | None = None

    def up(self, now_s: int) -> bool:
        return now_s > self.down_until_s

    def publish(self, key: str, payload: bytes) -> None:
        if self.fail_after is not None:
            if self.fail_after <= 0:
                self.fail_after = None
                raise ChannelDown("mid-batch link drop")
            self.fail_after -= 1
        self.broker.publish(key, payload)


class SimRun:
    def __init__(
        self,
        workdir: str | Path,
        carts: list[SimCartSpec],
        duration_s: int,
        faults: list[SimFault] | None = None,
        controls: list[SimControl] | None = None,
        sessions: SessionMap | None = None,
        start_ms: int = 1_760_000_000_000,
        ack_timeout_ms: int = 10_000,
        start_recording: bool = True,
    ):
        self.workdir = Path(workdir)
        self.specs = carts
        self.duration_s = duration_s
        self.faults = sorted(faults or [], key=lambda f: f.at_s)
        self.controls = sorted(controls or [], key=lambda c: c.at_s)
        self.start_ms = start_ms
        self.start_recording = start_recording

        self.clock = SimClock(start_ms)
        self.broker = BrokerCore(self.workdir / "broker", ack_timeout_ms=ack_timeout_ms)
        self.store = RecordStore(self.workdir / "server")
        if sessions is None:
            margin = 3_600_000
            sessions = SessionMap([
                PatientSession(
                    patient_id=f"patient-{spec.cart_id}",
                    study_id=f"study-{spec.cart_id}",
                    room_id=spec.room_id,
                    cart_id=spec.cart_id,
                    admission_ts=start_ms - margin,
                    discharge_ts=start_ms + duration_s * 1000 + DRAIN_LIMIT_S * 1000 + margin,
                )
            for spec in carts])
        self.sessions = sessions
        keys = {spec.key_id: spec.key for spec in carts}
        self.pipeline = IngestPipeline(self.store, sessions, keys)
        self.health = HealthRegistry()
        self.result = SimResult()

        self.agents: dict[str, EdgeAgent] = {}
        self.channels: dict[str, _SimChannel] = {}
        self.skews: dict[str, SkewedClock] = {}
        for spec in carts:
            self._boot_agent(spec)
            self.channels[spec.cart_id] = _SimChannel(self.broker)
        self._consumers: list[str] = []
        for spec in carts:
            for sensor in spec.sensors:
                q = routing.data_key(spec.cart_id, sensor.modality)
                cid = f"ingest:{q}"
                self.broker.subscribe(q, cid)
                self._consumers.append(cid)
            hb = routing.heartbeat_key(spec.cart_id)
            self.broker.subscribe(hb, f"ingest:{hb}")
            self._consumers.append(f"ingest:{hb}")

    def _boot_agent(self, spec: SimCartSpec, resume_state: CartState | None = None) -> None:
        skew = self.skews.get(spec.cart_id) or SkewedClock(self.clock)
        self.skews[spec.cart_id] = skew
        agent = EdgeAgent(
            cart_id=spec.cart_id,
            room_id=spec.room_id,
            sensors=spec.sensors,
            state_dir=self.workdir / "carts" / spec.cart_id,
            key=spec.key,
            key_id=spec.key_id,
            clock=skew,
            start_ms=self.start_ms,
        )
        agent.on_enqueue = lambda env: self.result.enqueued_keys.add(env.key)
        if resume_state is not None:
            # a restarted cart re-reads its last commanded state
            agent.state = resume_state
        elif self.start_recording:
            agent.handle_command(ControlCommand("start"))
        self.agents[spec.cart_id] = agent

    # -- fault application -----------------------------------------------------

    def _apply_faults(self, t: int) -> None:
        for fault in self.faults:
            if fault.at_s != t:
                continue
            if fault.kind == FAULT_NET_DOWN:
                ch = self.channels[fault.cart_id]
                ch.down_until_s = t + fault.duration_s
                ch.fail_after = 2  # drop mid-batch for a sharper test
                log.info("t=%d net-down %s for %ds", t, fault.cart_id, fault.duration_s)
            elif fault.kind == FAULT_CRASH:
                spec = next(s for s in self.specs if s.cart_id == fault.cart_id)
                old = self.agents[fault.cart_id]
                old_state = old.state
                # a crash loses all in-memory state; only fsynced data survives
                old.close()
                self._boot_agent(spec, resume_state=old_state)
                log.info("t=%d crash+restart %s", t, fault.cart_id)
            elif fault.kind == FAULT_CLOCK_SKEW:
                self.skews[fault.cart_id].offset_ms += fault.skew_ms
                log.info("t=%d clock-skew %s by %dms", t, fault.cart_id, fault.skew_ms)

    def _apply_controls(self, t: int) -> None:
        for ctl in self.controls:
            if ctl.at_s == t:
                state = self.agents[ctl.cart_id].handle_command(ctl.command)
                self.result.final_states[ctl.cart_id] = state

    # -- main loop ---------------------------------------------------------------

    def _step(self, t: int, produce: bool) -> None:
        now_ms = self.clock.now_ms()
        self._apply_faults(t)
        self._apply_controls(t)
        if produce:
            for spec in self.specs:
                self.agents[spec.cart_id].produce_due()
            # measure backlog between production and the publish drain, when
            # pending depth is at its per-second peak
            self._sample_backlog()
        for spec in self.specs:
            agent = self.agents[spec.cart_id]
            channel = self.channels[spec.cart_id]
            if channel.up(t):
                try:
                    if agent.heartbeat_due(now_ms):
                        channel.publish(
                            routing.heartbeat_key(spec.cart_id), agent.heartbeat_payload(now_ms)
                        )
                except ChannelDown:
                    pass
                agent.publish_pending(channel, now_ms)
        self.broker.requeue_timeouts(now_ms)
        for delivery in self.broker.collect_deliveries(now_ms):
            queue = delivery.queue
            if queue.startswith(routing.HEARTBEAT_PREFIX + "."):
                doc = json.loads(delivery.payload)
                self.health.on_heartbeat(
                    doc["cart_id"], doc["room_id"], doc["state"]["recording"],
                    now_ms, doc.get("sensors"),
                )
                self.broker.ack(delivery.consumer_id, delivery.tag)
                continue
            result = self.pipeline.ingest_bytes(delivery.payload)
            if result.disposition == ACK:
                self.broker.ack(delivery.consumer_id, delivery.tag)
                if result.outcome == "stored":
                    self.result.stored_keys.add(result.envelope.key)
                    self.health.on_ingest(
                        result.envelope.key.cart_id,
                        result.envelope.key.sensor_id,
                        result.envelope.modality,
                        now_ms,
                    )
                elif result.outcome == "duplicate":
                    self.result.duplicates_acked += 1
                elif result.outcome == "quarantined":
                    self.result.quarantined += 1

    def _sample_backlog(self) -> None:
        now_ms = self.clock.now_ms()
        for cart_id, agent in self.agents.items():
            for sensor_id, depth in agent.pending_depths().items():
                key = f"{cart_id}/{sensor_id}"
                if depth > self.result.max_pending_depth.get(key, 0):
                    self.result.max_pending_depth[key] = depth
            for sensor_id, age in agent.oldest_pending_age_ms(now_ms).items():
                key = f"{cart_id}/{sensor_id}"
                if age > self.result.max_pending_age_ms.get(key, 0):
                    self.result.max_pending_age_ms[key] = age

    def _all_drained(self) -> bool:
        if any(a.pending_depths()[s] for a in self.agents.values() for s in a.pending_depths()):
            return False
        return all(self.broker.queue_depth(q) == 0 for q in self.broker.queues())

    def run(self) -> SimResult:
        for t in range(self.duration_s):
            self._step(t, produce=True)
            self.clock.advance_ms(1000)
            self.result.sim_seconds = t + 1
        # drain: stop producing, restore connectivity, flush everything through
        for channel in self.channels.values():
            channel.down_until_s = -1
            channel.fail_after = None
        for extra in range(DRAIN_LIMIT_S):
            if self._all_drained():
                self.result.drained = True
                break
            self._step(self.duration_s + extra, produce=False)
            self.clock.advance_ms(1000)
            self.result.sim_seconds += 1
        manifest_keys = self.store.manifest_keys()
        self.result.manifest_key_count = len(manifest_keys)
        self.result.stored_keys = set(manifest_keys)
        self.result.health = self.health.snapshot(self.clock.now_ms())
        for cart_id, agent in self.agents.items():
            self.result.final_states.setdefault(cart_id, agent.state)
        return self.result

    def close(self) -> None:
        for agent in self.agents.values():
            agent.close()
        self.broker.close()
        self.store.close()


def default_cart_specs(
    n_carts: int, seed: int = 1000, frame_w: int = 64, frame_h: int = 48
) -> list[SimCartSpec]:
    """The standard six-sensor cart fleet used by demos and acceptance."""
    from .core.types import Modality
    from .edge.sim import Scenario

    specs = []
    for i in range(n_carts):
        cart_id = f"c{i + 1}"
        base = seed + i * 101
        sensors = [
            SensorSimConfig(Modality.RGB_FRAME, "rgb0", base + 1, width=frame_w, height=frame_h,
                            scenario=Scenario(face_counts=(1,))),
            SensorSimConfig(Modality.DEPTH_FRAME, "depth0", base + 2, width=frame_w, height=frame_h,
                            scenario=Scenario(person_counts=(0, 1, 1, 2))),
            SensorSimConfig(Modality.ACCEL, "accel0", base + 3, rate_hz=30),
            SensorSimConfig(Modality.EMG, "emg0", base + 4),
            SensorSimConfig(Modality.NOISE, "noise0", base + 5,
                            scenario=Scenario(diurnal_base=45, diurnal_amp=10, jitter_sd=1.5)),
            SensorSimConfig(Modality.LIGHT, "light0", base + 6,
                            scenario=Scenario(diurnal_base=120, diurnal_amp=110, jitter_sd=4.0)),
        ]
        key = bytes((base + j) % 256 for j in range(32))
        specs.append(SimCartSpec(cart_id, f"R{i + 1:03d}", sensors, key, f"key-{cart_id}"))
    return specs
