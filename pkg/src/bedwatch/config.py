"""Config files (TOML) for the cart, broker, server and compose topologies.

Formats are documented in docs/configuration.md. Every validation error
names the offending field so operators can fix configs from the message
alone.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core.types import BedwatchError, Modality
from .edge.control import ControlCommand
from .edge.sim import Scenario, SensorSimConfig
from .simrun import SimCartSpec, SimControl, SimFault


class ConfigError(BedwatchError):
    pass


def _load_toml(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None


def _need(table: dict, key: str, kind, where: str):
    if key not in table:
        raise ConfigError(f"missing field '{where}.{key}'")
    value = table[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"field '{where}.{key}' must be {kind.__name__}")
    return value


def _key_bytes(hex_str: str, where: str) -> bytes:
    try:
        key = bytes.fromhex(hex_str)
    except ValueError:
        raise ConfigError(f"field '{where}' must be hex") from None
    if len(key) != 32:
        raise ConfigError(f"field '{where}' must be 32 bytes (64 hex chars)")
    return key


def _sensor_from_table(t: dict, idx: int) -> SensorSimConfig:
    where = f"sensor[{idx}]"
    modality_name = _need(t, "modality", str, where)
    try:
        modality = Modality(modality_name)
    except ValueError:
        raise ConfigError(
            f"field '{where}.modality' must be one of {[m.value for m in Modality]}"
        ) from None
    scenario_t = t.get("scenario", {})
    scenario = Scenario(
        face_counts=tuple(scenario_t.get("face_counts", (1,))),
        person_counts=tuple(scenario_t.get("person_counts", (1,))),
        au_cycle=tuple(tuple(x) for x in scenario_t.get("au_cycle", ((),))),
        wiggle_frac=float(scenario_t.get("wiggle_frac", 0.06)),
        diurnal_base=float(scenario_t.get("diurnal_base", 45.0)),
        diurnal_amp=float(scenario_t.get("diurnal_amp", 10.0)),
        jitter_sd=float(scenario_t.get("jitter_sd", 1.0)),
        day_phase_s=float(scenario_t.get("day_phase_s", 0.0)),
        events=tuple(tuple(e) for e in scenario_t.get("events", ())),
        salt_frac=float(scenario_t.get("salt_frac", 0.004)),
    )
    return SensorSimConfig(
        modality=modality,
        sensor_id=_need(t, "sensor_id", str, where),
        seed=_need(t, "seed", int, where),
        rate_hz=float(t.get("rate_hz", 0.0)),
        width=int(t.get("width", 96)),
        height=int(t.get("height", 72)),
        scenario=scenario,
    )


@dataclass
class BrokerEndpoint:
    host: str = "127.0.0.1"
    port: int = 7601


@dataclass
class CartConfig:
    cart_id: str
    room_id: str
    state_dir: Path
    key_id: str
    key: bytes
    sensors: list[SensorSimConfig]
    broker: BrokerEndpoint
    creds_dir: Path

    @classmethod
    def load(cls, path: str | Path) -> "CartConfig":
        doc = _load_toml(path)
        cart = doc.get("cart")
        if cart is None:
            raise ConfigError("missing table 'cart'")
        cart_id = _need(cart, "cart_id", str, "cart")
        room_id = _need(cart, "room_id", str, "cart")
        state_dir = _need(cart, "state_dir", str, "cart")
        key_id = _need(cart, "key_id", str, "cart")
        key = _key_bytes(_need(cart, "key_hex", str, "cart"), "cart.key_hex")
        sensors_t = doc.get("sensor", [])
        if not sensors_t:
            raise ConfigError("missing array of tables 'sensor'")
        broker_t = doc.get("broker", {})
        tls_t = doc.get("tls", {})
        base = Path(path).parent
        return cls(
            cart_id=cart_id,
            room_id=room_id,
            state_dir=base / state_dir,
            key_id=key_id,
            key=key,
            sensors=[_sensor_from_table(t, i) for i, t in enumerate(sensors_t)],
            broker=BrokerEndpoint(
                host=broker_t.get("host", "127.0.0.1"), port=int(broker_t.get("port", 7601))
            ),
            creds_dir=base / _need(tls_t, "creds_dir", str, "tls"),
        )


@dataclass
class BrokerConfig:
    host: str
    port: int
    data_dir: Path
    creds_dir: Path
    ack_timeout_ms: int = 10_000

    @classmethod
    def load(cls, path: str | Path) -> "BrokerConfig":
        doc = _load_toml(path)
        t = doc.get("broker")
        if t is None:
            raise ConfigError("missing table 'broker'")
        tls_t = doc.get("tls", {})
        base = Path(path).parent
        return cls(
            host=t.get("host", "127.0.0.1"),
            port=int(_need(t, "port", int, "broker")),
            data_dir=base / _need(t, "data_dir", str, "broker"),
            creds_dir=base / _need(tls_t, "creds_dir", str, "tls"),
            ack_timeout_ms=int(t.get("ack_timeout_ms", 10_000)),
        )


@dataclass
class ServerCartEntry:
    cart_id: str
    key_id: str
    key: bytes


@dataclass
class ServerConfig:
    storage_root: Path
    scrub_key: bytes
    clinical_feed: Path
    annotation_dir: Path
    metrics_dir: Path
    candidates_dir: Path
    http_host: str
    http_port: int
    broker: BrokerEndpoint
    creds_dir: Path
    carts: list[ServerCartEntry] = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path) -> "ServerConfig":
        doc = _load_toml(path)
        t = doc.get("server")
        if t is None:
            raise ConfigError("missing table 'server'")
        broker_t = doc.get("broker", {})
        tls_t = doc.get("tls", {})
        base = Path(path).parent
        carts = []
        for i, ct in enumerate(doc.get("cart", [])):
            where = f"cart[{i}]"
            carts.append(
                ServerCartEntry(
                    cart_id=_need(ct, "cart_id", str, where),
                    key_id=_need(ct, "key_id", str, where),
                    key=_key_bytes(_need(ct, "key_hex", str, where), f"{where}.key_hex"),
                )
            )
        return cls(
            storage_root=base / _need(t, "storage_root", str, "server"),
            scrub_key=_key_bytes(_need(t, "scrub_key_hex", str, "server"), "server.scrub_key_hex"),
            clinical_feed=base / _need(t, "clinical_feed", str, "server"),
            annotation_dir=base / t.get("annotation_dir", "annotations"),
            metrics_dir=base / t.get("metrics_dir", "metrics"),
            candidates_dir=base / t.get("candidates_dir", "candidates"),
            http_host=t.get("http_host", "127.0.0.1"),
            http_port=int(t.get("http_port", 7600)),
            broker=BrokerEndpoint(
                host=broker_t.get("host", "127.0.0.1"), port=int(broker_t.get("port", 7601))
            ),
            creds_dir=base / _need(tls_t, "creds_dir", str, "tls"),
            carts=carts,
        )

    def key_table(self) -> dict[str, bytes]:
        return {c.key_id: c.key for c in self.carts}


@dataclass
class ComposeConfig:
    """Single-process deterministic topology (test mode)."""

    workdir: Path
    duration_s: int
    carts: list[SimCartSpec]
    faults: list[SimFault]
    controls: list[SimControl]
    seed: int

    @classmethod
    def load(cls, path: str | Path) -> "ComposeConfig":
        doc = _load_toml(path)
        t = doc.get("compose")
        if t is None:
            raise ConfigError("missing table 'compose'")
        base = Path(path).parent
        carts = []
        for i, ct in enumerate(doc.get("cart", [])):
            where = f"cart[{i}]"
            sensors = [_sensor_from_table(s, j) for j, s in enumerate(ct.get("sensor", []))]
            if not sensors:
                raise ConfigError(f"'{where}' has no sensors")
            carts.append(
                SimCartSpec(
                    cart_id=_need(ct, "cart_id", str, where),
                    room_id=_need(ct, "room_id", str, where),
                    sensors=sensors,
                    key=_key_bytes(_need(ct, "key_hex", str, where), f"{where}.key_hex"),
                    key_id=_need(ct, "key_id", str, where),
                )
            )
        faults = []
        for i, ft in enumerate(doc.get("fault", [])):
            where = f"fault[{i}]"
            faults.append(
                SimFault(
                    kind=_need(ft, "kind", str, where),
                    cart_id=_need(ft, "cart_id", str, where),
                    at_s=_need(ft, "at_s", int, where),
                    duration_s=int(ft.get("duration_s", 0)),
                    skew_ms=int(ft.get("skew_ms", 0)),
                )
            )
        controls = []
        for i, ctl in enumerate(doc.get("control", [])):
            where = f"control[{i}]"
            controls.append(
                SimControl(
                    at_s=_need(ctl, "at_s", int, where),
                    cart_id=_need(ctl, "cart_id", str, where),
                    command=ControlCommand(
                        _need(ctl, "command", str, where), float(ctl.get("delta", 0.0))
                    ),
                )
            )
        return cls(
            workdir=base / t.get("workdir", "simrun"),
            duration_s=int(_need(t, "duration_s", int, "compose")),
            carts=carts,
            faults=faults,
            controls=controls,
            seed=int(t.get("seed", 0)),
        )
