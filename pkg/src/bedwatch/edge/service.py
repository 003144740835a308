"""Long-running cart process over real sockets.

Wraps the sans-IO EdgeAgent with: a production ticker, a publisher with
reconnect, a command consumer answering on the response queue, and
heartbeats. Test-mode fault commands (net-down, crash, clock-skew) arrive
over the same command channel.
"""

from __future__ import annotations

import json
import logging
import threading
import time

from ..core.clock import SkewedClock, WallClock
from ..transport import routing
from ..transport.service import BrokerClient, BrokerTimeout
from .agent import ChannelDown, EdgeAgent
from .control import ControlCommand

log = logging.getLogger(__name__)

RECONNECT_DELAY_S = 1.0
TICK_INTERVAL_S = 0.2


class _ClientChannel:
    """Adapts BrokerClient.publish to the agent's ChannelDown contract."""

    def __init__(self, client: BrokerClient | None):
        self.client = client

    def publish(self, key: str, payload: bytes) -> None:
        if self.client is None or not self.client.connected:
            raise ChannelDown("no broker connection")
        try:
            self.client.publish(key, payload, timeout=5.0)
        except (ConnectionError, OSError, BrokerTimeout) as exc:
            raise ChannelDown(str(exc)) from None


class EdgeService:
    def __init__(self, config, test_mode: bool = False):
        self.config = config
        self.test_mode = test_mode
        self.clock = SkewedClock(WallClock())
        self.agent = EdgeAgent(
            cart_id=config.cart_id,
            room_id=config.room_id,
            sensors=config.sensors,
            state_dir=config.state_dir,
            key=config.key,
            key_id=config.key_id,
            clock=self.clock,
        )
        self.agent.handle_command(ControlCommand("start"))
        self._stop = threading.Event()
        self._agent_lock = threading.Lock()
        self._publisher: BrokerClient | None = None
        self._commands: BrokerClient | None = None
        self._net_down_until = 0.0

    # -- connections -------------------------------------------------------------

    def _connect(self) -> None:
        cfg = self.config
        self._publisher = BrokerClient(
            cfg.broker.host, cfg.broker.port, cfg.creds_dir, cfg.cart_id
        )
        self._commands = BrokerClient(
            cfg.broker.host, cfg.broker.port, cfg.creds_dir, cfg.cart_id
        )
        self._commands.subscribe(routing.command_key(cfg.cart_id), self._on_command)
        log.info("cart %s connected to broker %s:%d", cfg.cart_id, cfg.broker.host, cfg.broker.port)

    def _close_clients(self) -> None:
        for client in (self._publisher, self._commands):
            if client is not None:
                client.close()
        self._publisher = self._commands = None

    # -- command handling ---------------------------------------------------------

    def _on_command(self, tag: int, redelivered: bool, payload: bytes) -> None:
        self._commands.ack(tag)
        try:
            doc = json.loads(payload)
        except json.JSONDecodeError:
            log.warning("undecodable command payload")
            return
        correlation_id = doc.get("correlation_id", "")
        if "fault" in doc:
            self._apply_fault(doc)
            state = self.agent.state
        else:
            try:
                cmd = ControlCommand(doc["name"], float(doc.get("delta", 0.0)))
            except (KeyError, ValueError) as exc:
                log.warning("bad command: %s", exc)
                return
            with self._agent_lock:
                state = self.agent.handle_command(cmd)
        response = {"correlation_id": correlation_id, "cart_id": self.config.cart_id,
                    "state": state.to_dict()}
        try:
            self._publisher.publish(
                routing.response_key(self.config.cart_id),
                json.dumps(response, sort_keys=True).encode(),
            )
        except (ChannelDown, ConnectionError, OSError, BrokerTimeout):
            log.warning("could not publish command response")

    def _apply_fault(self, doc: dict) -> None:
        if not self.test_mode:
            log.warning("fault command ignored: not in test mode")
            return
        kind = doc["fault"]
        if kind == "net-down":
            self._net_down_until = time.monotonic() + float(doc.get("duration_s", 10))
            log.info("fault: net-down for %ss", doc.get("duration_s", 10))
        elif kind == "crash":
            log.info("fault: crashing now")
            import os

            os._exit(3)
        elif kind == "clock-skew":
            self.clock.offset_ms += int(doc.get("skew_ms", -5000))
            log.info("fault: clock skew now %dms", self.clock.offset_ms)

    # -- main loop ------------------------------------------------------------------

    def run_forever(self) -> None:
        threading.Thread(target=self._ticker, daemon=True).start()
        while not self._stop.is_set():
            try:
                self._connect()
                while not self._stop.is_set():
                    if any(
                        c is None or not c.connected
                        for c in (self._publisher, self._commands)
                    ):
                        raise ConnectionError("broker connection lost")
                    self._pump_once()
                    time.sleep(TICK_INTERVAL_S)
            except (ConnectionError, OSError) as exc:
                log.warning("broker link lost (%s); reconnecting", exc)
                self._close_clients()
                self._stop.wait(RECONNECT_DELAY_S)
            except Exception:
                log.exception("edge service error")
                self._close_clients()
                self._stop.wait(RECONNECT_DELAY_S)
        self._close_clients()
        self.agent.close()

    def _pump_once(self) -> None:
        now_ms = self.clock.now_ms()
        if time.monotonic() < self._net_down_until:
            return
        channel = _ClientChannel(self._publisher)
        with self._agent_lock:
            if self.agent.heartbeat_due(now_ms):
                try:
                    channel.publish(
                        routing.heartbeat_key(self.config.cart_id),
                        self.agent.heartbeat_payload(now_ms),
                    )
                except ChannelDown:
                    pass
            self.agent.publish_pending(channel, now_ms)

    def _ticker(self) -> None:
        while not self._stop.is_set():
            with self._agent_lock:
                self.agent.produce_due()
            self._stop.wait(TICK_INTERVAL_S)

    def stop(self) -> None:
        self._stop.set()
