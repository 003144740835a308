"""Write a ready-to-run deployment directory: TLS credentials, broker,
cart and server configs, and a small clinical feed covering the next week."""

from __future__ import annotations

import json
import os
import socket
import time
from pathlib import Path

from .transport.tlschan import generate_credentials

HOUR_MS = 3_600_000
DAY_MS = 86_400_000


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _cart_toml(cart_id: str, room_id: str, key_hex: str, broker_port: int, seed: int) -> str:
    return f"""# cart configuration (generated by `bedwatch scaffold`)
[cart]
cart_id = "{cart_id}"
room_id = "{room_id}"
state_dir = "var/carts/{cart_id}"
key_id = "key-{cart_id}"
key_hex = "{key_hex}"

[broker]
host = "127.0.0.1"
port = {broker_port}

[tls]
creds_dir = "creds"

[[sensor]]
sensor_id = "rgb0"
modality = "RGB_FRAME"
seed = {seed + 1}
width = 96
height = 72
[sensor.scenario]
face_counts = [1]
au_cycle = [["AU43"], [], ["AU4", "AU12"]]

[[sensor]]
sensor_id = "depth0"
modality = "DEPTH_FRAME"
seed = {seed + 2}
width = 96
height = 72
[sensor.scenario]
person_counts = [0, 1, 1, 2]

[[sensor]]
sensor_id = "accel0"
modality = "ACCEL"
seed = {seed + 3}
rate_hz = 30

[[sensor]]
sensor_id = "emg0"
modality = "EMG"
seed = {seed + 4}

[[sensor]]
sensor_id = "noise0"
modality = "NOISE"
seed = {seed + 5}
[sensor.scenario]
diurnal_base = 45.0
diurnal_amp = 10.0
jitter_sd = 1.5

[[sensor]]
sensor_id = "light0"
modality = "LIGHT"
seed = {seed + 6}
[sensor.scenario]
diurnal_base = 120.0
diurnal_amp = 110.0
jitter_sd = 4.0
"""


def write_scaffold(out_dir: Path, n_carts: int = 2, broker_port: int = 0,
                   http_port: int = 7600) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if broker_port == 0:
        broker_port = _free_port()

    cart_ids = [f"c{i + 1}" for i in range(n_carts)]
    generate_credentials(out_dir / "creds", ["broker", "server", *cart_ids])

    keys = {cart_id: os.urandom(32).hex() for cart_id in cart_ids}
    paths: dict[str, Path] = {"root": out_dir}

    for i, cart_id in enumerate(cart_ids):
        path = out_dir / f"cart_{cart_id}.toml"
        path.write_text(_cart_toml(cart_id, f"R{i + 1:03d}", keys[cart_id],
                                   broker_port, 1000 + i * 101))
        paths[f"cart_{cart_id}"] = path

    broker_toml = out_dir / "broker.toml"
    broker_toml.write_text(f"""# broker configuration (generated)
[broker]
host = "127.0.0.1"
port = {broker_port}
data_dir = "var/broker"
ack_timeout_ms = 10000

[tls]
creds_dir = "creds"
""")
    paths["broker"] = broker_toml

    cart_tables = "\n".join(
        f"""[[cart]]
cart_id = "{cart_id}"
key_id = "key-{cart_id}"
key_hex = "{keys[cart_id]}"
"""
        for cart_id in cart_ids
    )
    server_toml = out_dir / "server.toml"
    server_toml.write_text(f"""# server configuration (generated)
[server]
storage_root = "var/server"
scrub_key_hex = "{os.urandom(32).hex()}"
clinical_feed = "clinical_feed.jsonl"
annotation_dir = "var/annotations"
metrics_dir = "var/metrics"
candidates_dir = "var/candidates"
http_host = "127.0.0.1"
http_port = {http_port}

[broker]
host = "127.0.0.1"
port = {broker_port}

[tls]
creds_dir = "creds"

{cart_tables}""")
    paths["server"] = server_toml

    now = int(time.time() * 1000)
    feed_lines = []
    for i, cart_id in enumerate(cart_ids):
        room = f"R{i + 1:03d}"
        feed_lines.append({
            "type": "session", "patient_id": f"patient-{i + 1:03d}", "room_id": room,
            "cart_id": cart_id, "admission_ts": now - HOUR_MS,
            "discharge_ts": now + 7 * DAY_MS,
        })
        feed_lines.append({
            "type": "vitals", "room_id": room, "ts": now - 30 * 60_000,
            "heart_rate": 84 + i, "resp_rate": 17, "spo2": 97, "sbp": 121, "temp_c": 37.1,
        })
        feed_lines.append({"type": "pain", "room_id": room, "ts": now, "score": 4})
    feed_path = out_dir / "clinical_feed.jsonl"
    feed_path.write_text("\n".join(json.dumps(x) for x in feed_lines) + "\n")
    paths["clinical_feed"] = feed_path
    return paths
