"""bedwatch command line: run components, inject faults, drive pipelines,
compute metrics and analytics reports, and execute the acceptance suite.

Exit codes: 0 ok, 2 config error, 3 runtime fault. Logs go to stderr as
line-delimited JSON.
"""

from __future__ import annotations

import hashlib
import json
import logging
import signal
import sys
import time
from pathlib import Path

import click

from . import __version__
from .core.types import BedwatchError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("bedwatch")


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        doc = {
            "ts": int(time.time() * 1000),
            "level": record.levelname.lower(),
            "logger": record.name,
            "event": record.getMessage(),
        }
        if record.exc_info:
            doc["exc"] = self.formatException(record.exc_info)
        return json.dumps(doc, sort_keys=True)


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _config_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fail_config(exc: Exception) -> None:
    click.echo(f"config error: {exc}", err=True)
    sys.exit(EXIT_CONFIG)


@click.group()
@click.option("--verbose", is_flag=True, help="debug logging")
@click.version_option(__version__)
def main(verbose: bool):
    _setup_logging(verbose)


# -- long-running components -----------------------------------------------------


@main.group()
def edge():
    """Cart-side commands."""


@edge.command("run")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--test-mode", is_flag=True, help="accept fault-injection commands")
def edge_run(config_path: str, test_mode: bool):
    """Run one cart agent until SIGTERM/SIGINT."""
    from .config import CartConfig, ConfigError
    from .edge.service import EdgeService

    try:
        config = CartConfig.load(config_path)
    except ConfigError as exc:
        _fail_config(exc)
    service = EdgeService(config, test_mode=test_mode)
    _run_until_signal(service.run_forever, service.stop)


@edge.command("inject")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--fault", "kind", required=True,
              type=click.Choice(["net-down", "crash", "clock-skew"]))
@click.option("--duration", default=10.0, help="net-down duration seconds")
@click.option("--skew-ms", default=-5000, help="clock skew to apply")
def edge_inject(config_path: str, kind: str, duration: float, skew_ms: int):
    """Send a fault command to this cart's command queue (test mode only)."""
    from .config import CartConfig, ConfigError
    from .transport import routing
    from .transport.service import BrokerClient

    try:
        config = CartConfig.load(config_path)
    except ConfigError as exc:
        _fail_config(exc)
    try:
        client = BrokerClient(
            config.broker.host, config.broker.port, config.creds_dir, config.cart_id
        )
        payload = {"fault": kind, "duration_s": duration, "skew_ms": skew_ms,
                   "correlation_id": ""}
        client.publish(
            routing.command_key(config.cart_id), json.dumps(payload, sort_keys=True).encode()
        )
        client.close()
    except (OSError, BedwatchError) as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"fault {kind} injected for {config.cart_id}")


@main.group()
def broker():
    """Broker commands."""


@broker.command("run")
@click.option("--config", "config_path", required=True, type=click.Path())
def broker_run(config_path: str):
    """Run the durable message broker until SIGTERM/SIGINT."""
    from .config import BrokerConfig, ConfigError
    from .transport.service import BrokerService

    try:
        config = BrokerConfig.load(config_path)
    except ConfigError as exc:
        _fail_config(exc)
    try:
        service = BrokerService(
            config.host, config.port, config.data_dir, config.creds_dir,
            ack_timeout_ms=config.ack_timeout_ms,
        )
    except (OSError, BedwatchError) as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    service.start()
    log.info("broker listening on %s:%d", config.host, service.port)
    _wait_for_signal()
    service.stop()


@main.group()
def server():
    """Server-side commands."""


@server.command("run")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--frontend", "frontend_dir", type=click.Path(), default=None,
              help="serve a built frontend from this directory at /ui")
def server_run(config_path: str, frontend_dir: str | None):
    """Run ingest consumers plus the HTTP API until SIGTERM/SIGINT."""
    import uvicorn

    from .config import ConfigError, ServerConfig
    from .ingest.service import ServerService

    try:
        config = ServerConfig.load(config_path)
    except ConfigError as exc:
        _fail_config(exc)
    try:
        service = ServerService(config)
        service.connect()
    except (OSError, BedwatchError) as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    app = service.build_app(frontend_dir)
    log.info("server HTTP on %s:%d", config.http_host, config.http_port)
    try:
        uvicorn.run(app, host=config.http_host, port=config.http_port, log_level="warning")
    finally:
        service.close()


def _wait_for_signal() -> None:
    stop = {"flag": False}

    def handler(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGTERM, handler)
    signal.signal(signal.SIGINT, handler)
    while not stop["flag"]:
        time.sleep(0.2)


def _run_until_signal(run_forever, stop) -> None:
    import threading

    t = threading.Thread(target=run_forever, daemon=True)
    t.start()
    try:
        _wait_for_signal()
    finally:
        stop()
        t.join(timeout=5)


# -- deterministic test-mode topology -----------------------------------------------


@main.command("simrun")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="write the run report JSON here")
def simrun_cmd(config_path: str, out_path: str | None):
    """Run the whole topology in one process on simulated time."""
    from .config import ComposeConfig, ConfigError
    from .simrun import SimRun

    try:
        compose = ComposeConfig.load(config_path)
    except ConfigError as exc:
        _fail_config(exc)
    run = SimRun(
        compose.workdir, compose.carts, compose.duration_s,
        faults=compose.faults, controls=compose.controls,
    )
    t0 = time.monotonic()
    res = run.run()
    run.close()
    report = {
        "config_digest": _config_digest(Path(config_path)),
        "sim_seconds": res.sim_seconds,
        "wall_seconds": round(time.monotonic() - t0, 3),
        "enqueued": len(res.enqueued_keys),
        "stored": len(res.stored_keys),
        "zero_loss": res.zero_loss,
        "manifest_duplicates": res.manifest_duplicates,
        "duplicates_acked": res.duplicates_acked,
        "quarantined": res.quarantined,
        "max_pending_depth": res.max_pending_depth,
        "health": res.health,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text)
    click.echo(text)
    if not res.zero_loss:
        sys.exit(EXIT_RUNTIME)


# -- batch pipelines ---------------------------------------------------------------


def _load_server_config(config_path: str):
    from .config import ConfigError, ServerConfig

    try:
        return ServerConfig.load(config_path)
    except ConfigError as exc:
        _fail_config(exc)


@main.command("pipeline")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--study", "study_id", required=True)
@click.option("--which", type=click.Choice(["face", "depth"]), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def pipeline_cmd(config_path: str, study_id: str, which: str, out_dir: str | None):
    """Produce annotation candidates from a stored study partition."""
    from .batch import run_depth_pipeline, run_face_pipeline, write_run_manifest
    from .ingest.sessions import ClinicalFeed
    from .ingest.storage import RecordStore

    config = _load_server_config(config_path)
    out = Path(out_dir) if out_dir else config.candidates_dir
    store = RecordStore(config.storage_root)
    started = int(time.time() * 1000)
    try:
        if which == "face":
            feed = ClinicalFeed.load(config.clinical_feed, config.scrub_key)
            pain = feed.pain_timestamps_for_study(study_id)
            stats = run_face_pipeline(store, study_id, config.key_table(), pain, out)
        else:
            stats = run_depth_pipeline(store, study_id, config.key_table(), out)
    except BedwatchError as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    manifest_path = out / study_id / which / "manifest.jsonl"
    write_run_manifest(
        out / study_id / which, f"pipeline {which} {study_id}",
        _config_digest(Path(config_path)), [manifest_path], started, int(time.time() * 1000),
    )
    click.echo(json.dumps({
        "study_id": study_id, "pipeline": which, "examined": stats.examined,
        "candidates": stats.candidates, "out": str(out),
    }, sort_keys=True))


@main.command("metrics")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--study", "study_id", required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def metrics_cmd(config_path: str, study_id: str, out_dir: str | None):
    """Compute all dashboard metric series for a study; render figures."""
    from .batch import compute_study_metrics, render_metrics_figures, write_run_manifest
    from .ingest.sessions import ClinicalFeed
    from .ingest.storage import RecordStore

    config = _load_server_config(config_path)
    out = Path(out_dir) if out_dir else config.metrics_dir
    started = int(time.time() * 1000)
    try:
        feed = ClinicalFeed.load(config.clinical_feed, config.scrub_key)
        store = RecordStore(config.storage_root)
        points = compute_study_metrics(store, study_id, config.key_table(), feed, out)
        figures = render_metrics_figures(points, out / f"{study_id}_figures")
    except BedwatchError as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    write_run_manifest(out, f"metrics {study_id}", _config_digest(Path(config_path)),
                       [out / f"{study_id}.jsonl"], started, int(time.time() * 1000))
    click.echo(json.dumps({
        "study_id": study_id, "points": len(points),
        "figures": [str(f) for f in figures], "out": str(out),
    }, sort_keys=True))


@main.command("predict")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--study", "study_id", default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def predict_cmd(config_path: str, study_id: str | None, out_path: str | None):
    """Run the mock AU model over face candidates; write predictions JSONL."""
    from .batch import predict_face_items

    config = _load_server_config(config_path)
    out = Path(out_path) if out_path else config.metrics_dir.parent / "predictions" / "au_predictions.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = predict_face_items(config.candidates_dir, study_id)
    with open(out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    click.echo(json.dumps({"predictions": len(rows), "out": str(out)}, sort_keys=True))


@main.command("analytics")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--report", type=click.Choice(["weekly", "al-queue"]), required=True)
@click.option("--week", "week_of", default=None, help="any date inside the week (YYYY-MM-DD)")
@click.option("--predictions", "predictions_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None)
def analytics_cmd(config_path: str, report: str, week_of: str | None,
                  predictions_path: str | None, out_dir: str | None):
    """Weekly summary or ranked active-learning queue, with figures."""
    from .analytics import AnnotationStore
    from .batch import (
        build_al_queue,
        format_queue_table,
        load_predictions,
        render_queue_figure,
        render_weekly_report,
        write_run_manifest,
    )

    config = _load_server_config(config_path)
    out = Path(out_dir) if out_dir else config.metrics_dir.parent / "reports"
    out.mkdir(parents=True, exist_ok=True)
    store = AnnotationStore(config.annotation_dir)
    started = int(time.time() * 1000)
    if report == "weekly":
        if not week_of:
            week_of = time.strftime("%Y-%m-%d")
        doc = render_weekly_report(store, week_of, out)
        write_run_manifest(out, f"analytics weekly {week_of}",
                           _config_digest(Path(config_path)),
                           [out / "weekly_summary.jsonl"], started, int(time.time() * 1000))
        click.echo((out / "weekly_summary.txt").read_text())
        return
    predictions = []
    if predictions_path:
        predictions = load_predictions(predictions_path)
    else:
        default = config.metrics_dir.parent / "predictions" / "au_predictions.jsonl"
        if default.exists():
            predictions = load_predictions(default)
    queue = build_al_queue(store, predictions, config.candidates_dir)
    queue_path = out / "al_queue.jsonl"
    with open(queue_path, "w", encoding="utf-8") as fh:
        for row in queue:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    render_queue_figure(queue, out / "al_queue.png")
    write_run_manifest(out, "analytics al-queue", _config_digest(Path(config_path)),
                       [queue_path], started, int(time.time() * 1000))
    click.echo(format_queue_table(queue))


# -- credentials and scaffolding ----------------------------------------------------


@main.command("keygen")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--identities", required=True,
              help="comma-separated, e.g. broker,server,c1,c2")
def keygen_cmd(out_dir: str, identities: str):
    """Generate a private CA plus per-identity TLS credentials."""
    from .transport import generate_credentials

    names = [x.strip() for x in identities.split(",") if x.strip()]
    if not names:
        click.echo("config error: no identities given", err=True)
        sys.exit(EXIT_CONFIG)
    generate_credentials(out_dir, names)
    click.echo(f"wrote CA and {len(names)} identities to {out_dir}")


@main.command("scaffold")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--carts", "n_carts", default=2, show_default=True)
@click.option("--broker-port", default=0, help="0 picks a free port at run time")
@click.option("--http-port", default=7600, show_default=True)
def scaffold_cmd(out_dir: str, n_carts: int, broker_port: int, http_port: int):
    """Write a ready-to-run deployment directory: creds, configs, feed."""
    from .scaffold import write_scaffold

    paths = write_scaffold(Path(out_dir), n_carts, broker_port, http_port)
    click.echo(json.dumps({k: str(v) for k, v in paths.items()}, indent=2, sort_keys=True))


@main.command("demo-serve")
@click.option("--dir", "deploy_dir", required=True, type=click.Path(),
              help="a directory created by `bedwatch scaffold`")
@click.option("--frontend", "frontend_dir", type=click.Path(), default=None)
@click.option("--ready-file", type=click.Path(), default=None,
              help="touch this file once all components are up")
def demo_serve_cmd(deploy_dir: str, frontend_dir: str | None, ready_file: str | None):
    """Run broker, carts and server together in one process (loopback)."""
    from .demo import run_demo

    try:
        run_demo(Path(deploy_dir), frontend_dir, ready_file)
    except BedwatchError as exc:
        click.echo(f"runtime fault: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)


# -- acceptance ---------------------------------------------------------------------


@main.command("accept")
@click.option("--criterion", "numbers", multiple=True, type=int,
              help="run only these criteria (repeatable)")
@click.option("--workdir", type=click.Path(), default=None,
              help="keep working data here instead of temp dirs")
def accept_cmd(numbers: tuple[int, ...], workdir: str | None):
    """Run the acceptance suite; one PASS/FAIL line per criterion."""
    from .acceptance import CRITERIA, run_criteria

    for n in numbers:
        if n not in CRITERIA:
            click.echo(f"config error: unknown criterion {n}", err=True)
            sys.exit(EXIT_CONFIG)
    ok = run_criteria(list(numbers) or None, workdir, echo=click.echo)
    sys.exit(EXIT_OK if ok else EXIT_RUNTIME)


if __name__ == "__main__":
    main()
