"""One-process demo topology over real loopback sockets.

Runs the broker, every cart found in the deployment directory and the
server (consumers + HTTP API) in threads. Used for UI development and the
frontend integration tests; the deterministic equivalent for correctness
testing is `bedwatch simrun`.
"""

from __future__ import annotations

import logging
import signal
import threading
import time
from pathlib import Path

from .config import BrokerConfig, CartConfig, ServerConfig
from .edge.service import EdgeService
from .ingest.service import ServerService
from .transport.service import BrokerService

log = logging.getLogger(__name__)


class DemoTopology:
    def __init__(self, deploy_dir: Path, frontend_dir=None):
        self.deploy_dir = Path(deploy_dir)
        self.broker_config = BrokerConfig.load(self.deploy_dir / "broker.toml")
        self.server_config = ServerConfig.load(self.deploy_dir / "server.toml")
        self.cart_configs = [
            CartConfig.load(p) for p in sorted(self.deploy_dir.glob("cart_*.toml"))
        ]
        self.frontend_dir = frontend_dir
        self.broker: BrokerService | None = None
        self.server: ServerService | None = None
        self.edges: list[EdgeService] = []
        self._uvicorn_server = None

    def start(self) -> None:
        cfg = self.broker_config
        self.broker = BrokerService(
            cfg.host, cfg.port, cfg.data_dir, cfg.creds_dir, ack_timeout_ms=cfg.ack_timeout_ms
        )
        self.broker.start()
        log.info("broker up on %s:%d", cfg.host, self.broker.port)

        self.server = ServerService(self.server_config)
        self.server.connect()

        for cart_cfg in self.cart_configs:
            edge = EdgeService(cart_cfg, test_mode=True)
            self.edges.append(edge)
            threading.Thread(target=edge.run_forever, daemon=True).start()
        log.info("%d carts started", len(self.edges))

        import uvicorn

        app = self.server.build_app(self.frontend_dir)
        config = uvicorn.Config(
            app, host=self.server_config.http_host, port=self.server_config.http_port,
            log_level="warning",
        )
        self._uvicorn_server = uvicorn.Server(config)
        threading.Thread(target=self._uvicorn_server.run, daemon=True).start()

    def wait_http_ready(self, timeout: float = 15.0) -> bool:
        import http.client

        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            try:
                conn = http.client.HTTPConnection(
                    self.server_config.http_host, self.server_config.http_port, timeout=1.0
                )
                conn.request("GET", "/carts")
                if conn.getresponse().status == 200:
                    return True
            except OSError:
                time.sleep(0.2)
        return False

    def stop(self) -> None:
        for edge in self.edges:
            edge.stop()
        if self._uvicorn_server is not None:
            self._uvicorn_server.should_exit = True
        if self.server is not None:
            self.server.close()
        if self.broker is not None:
            self.broker.stop()


def run_demo(deploy_dir: Path, frontend_dir=None, ready_file: str | None = None) -> None:
    topology = DemoTopology(deploy_dir, frontend_dir)
    topology.start()
    if not topology.wait_http_ready():
        topology.stop()
        raise RuntimeError("HTTP API did not come up")
    log.info(
        "demo ready: http://%s:%d (api), %d carts",
        topology.server_config.http_host, topology.server_config.http_port,
        len(topology.edges),
    )
    if ready_file:
        Path(ready_file).touch()
    stop = {"flag": False}

    def handler(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGTERM, handler)
    signal.signal(signal.SIGINT, handler)
    while not stop["flag"]:
        time.sleep(0.2)
    topology.stop()
