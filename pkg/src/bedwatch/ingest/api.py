"""HTTP+JSON API: the UI's only entry point.

Routes (documented in docs/http-api.md):
    GET  /carts                               fleet health snapshot
    GET  /carts/{id}/health                   one cart's health detail
    POST /carts/{id}/control                  {"name": ..., "delta": ...}
    GET  /carts/{id}/preview                  server-push (SSE) RGB preview
    GET  /patients                            known study ids
    GET  /patients/{study_id}/metrics         MetricPoint series
    GET  /annotation/{task}/queue             ranked annotation queue
    GET  /annotation/items/{item_id}/image    candidate PNG
    POST /annotation/{task}                   submit an annotation
    GET  /reports/weekly?week=YYYY-MM-DD      weekly summary
"""

from __future__ import annotations

import base64
import json
import logging
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles

from ..analytics import (
    AnnotationError,
    AnnotationStore,
    AuAnnotation,
    BoxAnnotation,
    TASK_DEPTH,
    TASK_FACE,
    weekly_summary,
)
from ..core.types import InvariantError
from ..edge.control import COMMANDS
from ..metrics import read_metric_points
from .health import HealthRegistry
from .preview import PreviewHub

log = logging.getLogger(__name__)

PREVIEW_MIN_INTERVAL_S = 1.0


class ControlUnavailable(Exception):
    pass


class ApiContext:
    """Everything the HTTP layer needs, injectable for tests."""

    def __init__(
        self,
        health: HealthRegistry,
        preview: PreviewHub,
        annotation_store: AnnotationStore,
        metrics_dir: Path,
        candidates_dir: Path,
        control_send=None,  # (cart_id, command_dict, timeout_s) -> state dict
        now_ms=lambda: int(time.time() * 1000),
        al_queue_path: Path | None = None,
        frontend_dir: Path | None = None,
    ):
        self.health = health
        self.preview = preview
        self.annotation_store = annotation_store
        self.metrics_dir = Path(metrics_dir)
        self.candidates_dir = Path(candidates_dir)
        self.control_send = control_send
        self.now_ms = now_ms
        self.al_queue_path = al_queue_path
        self.frontend_dir = frontend_dir


def build_app(ctx: ApiContext) -> FastAPI:
    app = FastAPI(title="bedwatch server", version="0.1.0")

    @app.get("/carts")
    def carts():
        snap = ctx.health.snapshot(ctx.now_ms())
        return {"carts": [snap[c] for c in sorted(snap)]}

    @app.get("/carts/{cart_id}/health")
    def cart_health(cart_id: str):
        cart = ctx.health.cart(cart_id, ctx.now_ms())
        if cart is None:
            raise HTTPException(404, f"unknown cart {cart_id}")
        return cart

    @app.post("/carts/{cart_id}/control")
    def control(cart_id: str, body: dict):
        name = body.get("name")
        if name not in COMMANDS:
            raise HTTPException(422, f"unknown command {name!r}; expected one of {COMMANDS}")
        if ctx.control_send is None:
            raise HTTPException(503, "control channel not wired")
        cart = ctx.health.cart(cart_id, ctx.now_ms())
        if cart is None or cart["rollup"] == "offline":
            raise HTTPException(502, f"cart {cart_id} is offline")
        try:
            state = ctx.control_send(
                cart_id, {"name": name, "delta": float(body.get("delta", 0.0))}, 2.0
            )
        except ControlUnavailable as exc:
            raise HTTPException(504, str(exc)) from None
        return {"ok": True, "cart_id": cart_id, "state": state}

    @app.get("/carts/{cart_id}/preview")
    def preview(cart_id: str, frames: int | None = None):
        """Server-push stream of the latest frame, at most one per second.

        ``frames`` bounds the number of data events before the stream closes
        (handy for curl and tests); the default streams until the cart goes
        offline or the client disconnects.
        """
        cart = ctx.health.cart(cart_id, ctx.now_ms())
        if cart is None:
            raise HTTPException(404, f"unknown cart {cart_id}")

        def event_stream():
            last_no = 0
            emitted = 0
            last_emit = 0.0
            while True:
                cart_now = ctx.health.cart(cart_id, ctx.now_ms())
                if cart_now is None or cart_now["rollup"] == "offline":
                    yield "event: status\ndata: {\"state\": \"offline\"}\n\n"
                    return
                spacing = PREVIEW_MIN_INTERVAL_S - (time.monotonic() - last_emit)
                if spacing > 0:
                    time.sleep(spacing)  # at most 1 FPS per subscriber
                frame = ctx.preview.next_frame(cart_id, last_no, timeout=2.0)
                if frame is None:
                    yield ": idle\n\n"  # comment keeps the stream alive
                    continue
                last_no = frame.frame_no
                last_emit = time.monotonic()
                doc = {
                    "capture_ts": frame.capture_ts,
                    "frame_no": frame.frame_no,
                    "png_b64": base64.b64encode(frame.png).decode(),
                }
                yield f"data: {json.dumps(doc)}\n\n"
                emitted += 1
                if frames is not None and emitted >= frames:
                    return

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    @app.get("/patients")
    def patients():
        ids = sorted(p.stem for p in ctx.metrics_dir.glob("*.jsonl"))
        return {"study_ids": ids}

    @app.get("/patients/{study_id}/metrics")
    def metrics(study_id: str, metric: str | None = None):
        path = ctx.metrics_dir / f"{study_id}.jsonl"
        if not path.exists():
            raise HTTPException(404, f"no metrics for study {study_id}")
        points = read_metric_points(path)
        if metric is not None:
            points = [p for p in points if p.metric == metric]
        return {
            "study_id": study_id,
            "points": [
                {"metric": p.metric, "ts": p.ts, "value": p.value} for p in points
            ],
        }

    @app.get("/annotation/{task}/queue")
    def annotation_queue(task: str, limit: int = 50):
        if task not in (TASK_FACE, TASK_DEPTH):
            raise HTTPException(404, f"unknown task {task}")
        ranked = []
        if ctx.al_queue_path and ctx.al_queue_path.exists():
            for line in ctx.al_queue_path.read_text().splitlines():
                if line.strip():
                    row = json.loads(line)
                    if row["task"] == task:
                        ranked.append(row)
        else:
            for manifest in sorted(ctx.candidates_dir.glob(f"*/{task}/manifest.jsonl")):
                for line in manifest.read_text().splitlines():
                    if line.strip():
                        item = json.loads(line)
                        ranked.append(
                            {"item_id": item["item_id"], "task": task,
                             "status": "unlabeled", "priority": 1.0}
                        )
        return {"task": task, "items": ranked[:limit]}

    @app.get("/annotation/items/{item_id}/image")
    def annotation_image(item_id: str):
        hits = list(ctx.candidates_dir.glob(f"*/*/{item_id}.png"))
        if not hits:
            raise HTTPException(404, f"no image for item {item_id}")
        return Response(hits[0].read_bytes(), media_type="image/png")

    @app.post("/annotation/{task}")
    def submit_annotation(task: str, body: dict):
        try:
            if task == TASK_FACE:
                ann = AuAnnotation.from_dict(body)
            elif task == TASK_DEPTH:
                ann = BoxAnnotation.from_dict(body)
            else:
                raise HTTPException(404, f"unknown task {task}")
        except (KeyError, ValueError, InvariantError) as exc:
            raise HTTPException(422, f"bad annotation: {exc}") from None
        try:
            ctx.annotation_store.append(ann)
        except AnnotationError as exc:
            raise HTTPException(500, str(exc)) from None
        return {"ok": True, "item_id": ann.item_id}

    @app.get("/reports/weekly")
    def weekly(week: str):
        try:
            summary = weekly_summary(ctx.annotation_store, week)
        except ValueError as exc:
            raise HTTPException(422, f"bad week date: {exc}") from None
        return summary.to_dict()

    if ctx.frontend_dir and Path(ctx.frontend_dir).exists():
        app.mount("/ui", StaticFiles(directory=str(ctx.frontend_dir), html=True), name="ui")
    else:

        @app.get("/ui", response_class=HTMLResponse)
        def ui_placeholder():
            return "<html><body><p>frontend not built; see frontend/README.md</p></body></html>"

    return app
