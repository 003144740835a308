"""Deterministic synthetic sensor streams.

Stand-ins for the cart hardware: every tick is a pure function of
(seed, config, tick_index), so pipeline tests can assert against scripted
ground truth and whole runs are bit-reproducible. RGB frames carry bright
elliptical "face" blobs (with an embedded feature-code strip the mock AU
detector reads); depth frames carry person-shaped silhouettes at distinct
depths plus salt outliers; the time series follow seeded diurnal curves.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..core.payloads import encode_depth, encode_image, encode_series
from ..core.types import InvariantError, Modality
from ..core.vocab import AU_LABELS

SALT_DEPTH_MM = 65535
FACE_BODY_LEVEL = 220
BACKGROUND_MAX = 120

# The feature-code block: a 3x3 patch below the face center whose channel
# values encode the active-AU bitmask, one nibble per channel
# (value = nibble*16 + 8). The mock AU detector decodes it from the crop.
FACE_CODE_ROW_REL = 0.35  # fraction of the vertical semi-axis below center


WALL_DEPTH_MM = 3800
PERSON_BASE_DEPTH_MM = 1400
PERSON_DEPTH_STEP_MM = 600


@dataclass(frozen=True)
class Scenario:
    """Scripted content of a synthetic stream.

    Count scripts are cycled by tick index; an empty script means zero.
    ``events`` override a time-series value exactly over [start, end) ticks,
    which keeps threshold tests deterministic.
    """

    face_counts: tuple[int, ...] = (1,)
    person_counts: tuple[int, ...] = (1,)
    au_cycle: tuple[tuple[str, ...], ...] = ((),)
    wiggle_frac: float = 0.06
    diurnal_base: float = 45.0
    diurnal_amp: float = 10.0
    jitter_sd: float = 1.0
    day_phase_s: float = 0.0
    events: tuple[tuple[int, int, float], ...] = ()
    salt_frac: float = 0.004

    def count_at(self, script: tuple[int, ...], tick: int) -> int:
        if not script:
            return 0
        return script[tick % len(script)]

    def au_labels_at(self, tick: int) -> tuple[str, ...]:
        if not self.au_cycle:
            return ()
        return self.au_cycle[tick % len(self.au_cycle)]

    def event_value_at(self, tick: int) -> float | None:
        for start, end, value in self.events:
            if start <= tick < end:
                return value
        return None


@dataclass(frozen=True)
class SensorSimConfig:
    modality: Modality
    sensor_id: str
    seed: int
    rate_hz: float = 0.0  # 0 means the modality's nominal rate
    width: int = 96
    height: int = 72
    scenario: Scenario = field(default_factory=Scenario)

    def __post_init__(self):
        if not self.sensor_id:
            raise InvariantError("sensor_id must be non-empty")
        if self.rate_hz < 0:
            raise InvariantError("rate_hz must be >= 0")
        if self.width <= 0 or self.height <= 0:
            raise InvariantError("frame size must be positive")

    @property
    def effective_rate_hz(self) -> float:
        return self.rate_hz if self.rate_hz > 0 else self.modality.nominal_rate_hz


def _rng(config: SensorSimConfig, tick: int) -> np.random.Generator:
    # SeedSequence mixing is stable across platforms and numpy versions;
    # crc32 keeps the sensor_id contribution independent of PYTHONHASHSEED
    return np.random.default_rng(
        np.random.SeedSequence(entropy=(config.seed, zlib.crc32(config.sensor_id.encode()), tick))
    )


def scripted_face_centers(config: SensorSimConfig, tick: int) -> list[tuple[float, float]]:
    """Ground-truth face centers for a tick, exposed for oracle tests."""
    n = config.scenario.count_at(config.scenario.face_counts, tick)
    return _centers(config, tick, n)


def scripted_person_centers(config: SensorSimConfig, tick: int) -> list[tuple[float, float]]:
    n = config.scenario.count_at(config.scenario.person_counts, tick)
    return _centers(config, tick, n)


def _centers(config: SensorSimConfig, tick: int, n: int) -> list[tuple[float, float]]:
    w, h = config.width, config.height
    amp = config.scenario.wiggle_frac
    out = []
    for i in range(n):
        phase = 2 * math.pi * (tick / 60.0) + i * 2.4
        cx = w * (i + 1) / (n + 1) + w * amp * math.sin(phase)
        cy = h * 0.5 + h * amp * math.cos(phase)
        out.append((cx, cy))
    return out


def _face_axes(config: SensorSimConfig) -> tuple[float, float]:
    return max(6.0, config.width / 10.0), max(7.0, config.height / 6.0)


def _render_rgb(config: SensorSimConfig, tick: int) -> np.ndarray:
    w, h = config.width, config.height
    rng = _rng(config, tick)
    base = rng.integers(20, 90, size=(h // 8 + 1, w // 8 + 1), dtype=np.int64)
    texture = np.kron(base, np.ones((8, 8), dtype=np.int64))[:h, :w]
    texture = np.clip(texture + rng.integers(0, 30, size=(h, w)), 0, BACKGROUND_MAX)
    frame = np.repeat(texture[:, :, None], 3, axis=2).astype(np.uint8)

    ys, xs = np.mgrid[0:h, 0:w]
    rx, ry = _face_axes(config)
    aus = config.scenario.au_labels_at(tick)
    for cx, cy in scripted_face_centers(config, tick):
        mask = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
        shade = FACE_BODY_LEVEL + (rng.integers(0, 20, size=(h, w)))
        for c, tint in enumerate((1.0, 0.92, 0.85)):  # skin-ish tint
            channel = frame[:, :, c]
            channel[mask] = np.clip(shade[mask] * tint, 200, 255).astype(np.uint8)
        _draw_face_features(frame, cx, cy, rx, ry, aus)
    return frame


def au_bitmask(aus: tuple[str, ...]) -> int:
    mask = 0
    for j, label in enumerate(AU_LABELS):
        if label in aus:
            mask |= 1 << j
    return mask


def code_block_color(aus: tuple[str, ...]) -> tuple[int, int, int]:
    mask = au_bitmask(aus)
    nibbles = ((mask >> 8) & 0xF, (mask >> 4) & 0xF, mask & 0xF)
    return tuple(n * 16 + 8 for n in nibbles)


def _draw_face_features(frame, cx, cy, rx, ry, aus):
    h, w, _ = frame.shape
    # eyes: two dark dots well above the code block
    for ex in (cx - rx * 0.45, cx + rx * 0.45):
        x0, y0 = int(round(ex)), int(round(cy - ry * 0.45))
        if 0 <= y0 < h - 1 and 0 <= x0 < w - 1:
            frame[y0 : y0 + 2, x0 : x0 + 2] = 40
    # feature-code block: uniform 3x3 so a one-pixel bbox error cannot hurt
    by = int(round(cy + ry * FACE_CODE_ROW_REL))
    bx = int(round(cx))
    color = code_block_color(aus)
    y0, y1 = max(0, by - 1), min(h, by + 2)
    x0, x1 = max(0, bx - 1), min(w, bx + 2)
    for c in range(3):
        frame[y0:y1, x0:x1, c] = color[c]


def _render_depth(config: SensorSimConfig, tick: int) -> np.ndarray:
    w, h = config.width, config.height
    rng = _rng(config, tick)
    rows = np.linspace(0, 400, h)[:, None]  # floor slopes toward the camera
    depth = WALL_DEPTH_MM - rows + rng.normal(0, 25, size=(h, w))
    ys, xs = np.mgrid[0:h, 0:w]
    centers = scripted_person_centers(config, tick)
    for i, (cx, cy) in enumerate(centers):
        person_depth = PERSON_BASE_DEPTH_MM + PERSON_DEPTH_STEP_MM * i
        body_rx, body_ry = max(5.0, w / 14.0), max(10.0, h / 4.0)
        body = ((xs - cx) / body_rx) ** 2 + ((ys - (cy + body_ry * 0.4)) / body_ry) ** 2 <= 1.0
        head_r = body_rx * 0.7
        head = (xs - cx) ** 2 + (ys - (cy - body_ry * 0.45)) ** 2 <= head_r**2
        silhouette = body | head
        depth[silhouette] = person_depth + rng.normal(0, 10, size=(h, w))[silhouette]
    depth = np.clip(depth, 0, 65534)
    n_salt = int(round(config.scenario.salt_frac * w * h))
    if n_salt:
        idx = rng.choice(w * h, size=n_salt, replace=False)
        depth.flat[idx] = SALT_DEPTH_MM
    return depth.astype(np.uint16)


def _diurnal_value(config: SensorSimConfig, tick: int, rng: np.random.Generator) -> float:
    sc = config.scenario
    override = sc.event_value_at(tick)
    if override is not None:
        return override
    t_day = (sc.day_phase_s + tick / config.effective_rate_hz) % 86400.0
    # peak mid-afternoon (14:00), trough at 02:00
    value = sc.diurnal_base + sc.diurnal_amp * math.sin(2 * math.pi * (t_day - 28800.0) / 86400.0)
    return value + float(rng.normal(0, sc.jitter_sd))


def _render_series(config: SensorSimConfig, tick: int) -> np.ndarray:
    rng = _rng(config, tick)
    rate = config.effective_rate_hz
    n = max(1, int(round(rate)))
    t = tick + np.arange(n) / rate
    if config.modality is Modality.ACCEL:
        out = np.empty((n, 3), dtype=np.float32)
        for ch, (g, phase) in enumerate(((0.0, 0.0), (0.0, 2.1), (9.81, 4.2))):
            out[:, ch] = g + 0.6 * np.sin(2 * np.pi * 1.2 * t + phase) + rng.normal(0, 0.05, n)
        return out
    if config.modality is Modality.EMG:
        burst = 0.5 + 0.5 * np.sin(2 * np.pi * 0.2 * t)
        signal = 0.8 * np.sin(2 * np.pi * 60.0 * t) * burst + rng.normal(0, 0.02, n)
        return signal.astype(np.float32)
    # NOISE / LIGHT: one sample per tick at 1 Hz
    return np.array([_diurnal_value(config, tick, rng)], dtype=np.float32)


def generate_tick(config: SensorSimConfig, tick_index: int) -> bytes:
    """Raw payload bytes for one tick; total and deterministic."""
    if tick_index < 0:
        raise InvariantError("tick_index must be >= 0")
    if config.modality is Modality.RGB_FRAME:
        return encode_image(_render_rgb(config, tick_index))
    if config.modality is Modality.DEPTH_FRAME:
        return encode_depth(_render_depth(config, tick_index))
    if config.modality in (Modality.ACCEL, Modality.EMG):
        return encode_series(_render_series(config, tick_index), config.effective_rate_hz)
    return encode_series(_render_series(config, tick_index), config.effective_rate_hz)
