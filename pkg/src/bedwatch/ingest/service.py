"""Server service: broker consumers, control bridge and the HTTP API.

One BrokerClient per consumed queue feeds the ingest pipeline; health and
preview update on the way through. Control requests are published to the
cart's command queue and matched to responses by correlation id.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid

import numpy as np

from ..analytics import AnnotationStore
from ..core.codec import EnvelopeDecodeError
from ..core.payloads import PayloadFormatError, decode_image
from ..core.types import Modality
from ..edge.sealing import UnsealError, unseal_payload
from ..transport import routing
from ..transport.service import BrokerClient, BrokerTimeout
from .api import ApiContext, ControlUnavailable, build_app
from .health import HealthRegistry
from .pipeline import ACK, IngestPipeline
from .preview import PreviewHub
from .sessions import ClinicalFeed
from .storage import RecordStore

log = logging.getLogger(__name__)


def _frame_png(pixels: np.ndarray) -> bytes:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return buf.getvalue()


class ControlBridge:
    def __init__(self, publisher: BrokerClient):
        self.publisher = publisher
        self._waiters: dict[str, tuple[threading.Event, dict]] = {}
        self._lock = threading.Lock()

    def send(self, cart_id: str, command: dict, timeout_s: float) -> dict:
        correlation_id = uuid.uuid4().hex
        ev = threading.Event()
        slot: dict = {}
        with self._lock:
            self._waiters[correlation_id] = (ev, slot)
        payload = dict(command, correlation_id=correlation_id)
        try:
            self.publisher.publish(
                routing.command_key(cart_id), json.dumps(payload, sort_keys=True).encode(),
                timeout=timeout_s,
            )
        except (ConnectionError, OSError, BrokerTimeout) as exc:
            with self._lock:
                self._waiters.pop(correlation_id, None)
            raise ControlUnavailable(f"cannot reach broker: {exc}") from None
        if not ev.wait(timeout_s):
            with self._lock:
                self._waiters.pop(correlation_id, None)
            raise ControlUnavailable(f"no response from cart {cart_id} within {timeout_s}s")
        return slot["state"]

    def on_response(self, payload: bytes) -> None:
        try:
            doc = json.loads(payload)
        except json.JSONDecodeError:
            return
        with self._lock:
            waiter = self._waiters.pop(doc.get("correlation_id", ""), None)
        if waiter:
            ev, slot = waiter
            slot["state"] = doc.get("state", {})
            ev.set()


class ServerService:
    def __init__(self, config, clock=None):
        from ..core.clock import WallClock

        self.config = config
        self.clock = clock or WallClock()
        self.store = RecordStore(config.storage_root)
        self.feed = ClinicalFeed.load(config.clinical_feed, config.scrub_key)
        self.pipeline = IngestPipeline(self.store, self.feed.sessions, config.key_table())
        self.health = HealthRegistry()
        self.preview = PreviewHub()
        self.annotation_store = AnnotationStore(config.annotation_dir)
        self._clients: list[BrokerClient] = []
        self._bridge: ControlBridge | None = None
        self._lock = threading.Lock()

    # -- broker wiring ---------------------------------------------------------

    def connect(self) -> None:
        cfg = self.config
        publisher = self._client()
        self._bridge = ControlBridge(publisher)
        for cart in cfg.carts:
            for modality in Modality:
                self._consume(routing.data_key(cart.cart_id, modality), self._on_data)
            self._consume(routing.heartbeat_key(cart.cart_id), self._on_heartbeat)
            self._consume(routing.response_key(cart.cart_id), self._on_response)
        log.info("server connected to broker %s:%d", cfg.broker.host, cfg.broker.port)

    def _client(self) -> BrokerClient:
        cfg = self.config
        client = BrokerClient(cfg.broker.host, cfg.broker.port, cfg.creds_dir, "server")
        self._clients.append(client)
        return client

    def _consume(self, queue: str, handler) -> None:
        client = self._client()

        def wrapped(tag: int, redelivered: bool, payload: bytes, client=client):
            try:
                ack = handler(payload)
            except Exception:
                log.exception("consumer handler failed on %s", queue)
                ack = False
            if ack:
                client.ack(tag)

        client.subscribe(queue, wrapped)

    # -- handlers ---------------------------------------------------------------

    def _on_data(self, payload: bytes) -> bool:
        with self._lock:
            result = self.pipeline.ingest_bytes(payload)
        if result.envelope is not None and result.outcome == "stored":
            env = result.envelope
            now = self.clock.now_ms()
            self.health.on_ingest(env.key.cart_id, env.key.sensor_id, env.modality, now)
            if env.modality is Modality.RGB_FRAME:
                self._publish_preview(env)
        return result.disposition == ACK

    def _publish_preview(self, env) -> None:
        key = self.config.key_table().get(env.cipher.key_id)
        if key is None:
            return
        try:
            pixels = decode_image(unseal_payload(env, key))
        except (UnsealError, PayloadFormatError, EnvelopeDecodeError):
            return
        self.preview.publish(env.key.cart_id, env.capture_ts, _frame_png(pixels))

    def _on_heartbeat(self, payload: bytes) -> bool:
        try:
            doc = json.loads(payload)
        except json.JSONDecodeError:
            return True  # drop junk heartbeats
        self.health.on_heartbeat(
            doc["cart_id"], doc.get("room_id", ""), doc.get("state", {}).get("recording", ""),
            self.clock.now_ms(), doc.get("sensors"),
        )
        return True

    def _on_response(self, payload: bytes) -> bool:
        if self._bridge is not None:
            self._bridge.on_response(payload)
        return True

    # -- HTTP ----------------------------------------------------------------------

    def api_context(self, frontend_dir=None) -> ApiContext:
        cfg = self.config
        return ApiContext(
            health=self.health,
            preview=self.preview,
            annotation_store=self.annotation_store,
            metrics_dir=cfg.metrics_dir,
            candidates_dir=cfg.candidates_dir,
            control_send=self._bridge.send if self._bridge else None,
            now_ms=self.clock.now_ms,
            al_queue_path=cfg.metrics_dir.parent / "reports" / "al_queue.jsonl",
            frontend_dir=frontend_dir,
        )

    def build_app(self, frontend_dir=None):
        return build_app(self.api_context(frontend_dir))

    def close(self) -> None:
        for client in self._clients:
            client.close()
        self.store.close()
