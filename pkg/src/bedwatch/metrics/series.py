"""Environmental and visitation metrics over stored time series.

All functions are pure and invariant under re-chunking of their input;
every constant (windows, thresholds, durations) is surfaced as a
parameter with the documented default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ..core.types import BedwatchError

HOUR_MS = 3_600_000
DAY_MS = 86_400_000

DAY_START_MIN = 7 * 60  # 07:00 local
DAY_END_MIN = 19 * 60  # 19:00 local

VISIT_MIN_COUNT = 2
VISIT_MIN_DURATION_MS = 60_000
VISIT_MERGE_GAP_MS = 60_000

DISRUPTION_LIGHT_THR = 100.0
DISRUPTION_NOISE_THR = 60.0
DISRUPTION_MIN_DURATION_MS = 30_000
DISRUPTION_MERGE_GAP_MS = 60_000

METRICS = (
    "acuity",
    "delirium_risk",
    "pain",
    "mobility",
    "noise",
    "light",
    "disruptions",
    "visitation_day",
    "visitation_night",
)


class MetricsError(BedwatchError):
    pass


@dataclass(frozen=True)
class MetricPoint:
    study_id: str
    metric: str
    ts: int
    value: float

    def __post_init__(self):
        if self.metric not in METRICS:
            raise MetricsError(f"unknown metric {self.metric!r}")
        if not math.isfinite(self.value):
            raise MetricsError(f"metric value must be finite, got {self.value}")

    def to_json(self) -> str:
        return json.dumps(
            {"study_id": self.study_id, "metric": self.metric, "ts": self.ts, "value": self.value},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "MetricPoint":
        d = json.loads(line)
        return cls(d["study_id"], d["metric"], int(d["ts"]), float(d["value"]))


def write_metric_points(path: str | Path, points: Iterable[MetricPoint]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in points:
            fh.write(p.to_json() + "\n")


def read_metric_points(path: str | Path) -> list[MetricPoint]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            out.append(MetricPoint.from_json(line))
    return out


# -- env window stats -----------------------------------------------------------


@dataclass
class EnvWindowStats:
    window_start: int
    window_end: int
    sample_count: int = 0
    noise_mean: float | None = None
    noise_max: float | None = None
    light_mean: float | None = None
    light_max: float | None = None


def env_stats(
    noise: Sequence[tuple[int, float]],
    light: Sequence[tuple[int, float]],
    window_ms: int = HOUR_MS,
) -> list[EnvWindowStats]:
    """Tumbling windows aligned to the epoch hour; empty windows are emitted.

    Every sample lands in exactly one window: [k*window, (k+1)*window).
    """
    all_ts = [ts for ts, _ in noise] + [ts for ts, _ in light]
    if not all_ts:
        return []
    first = min(all_ts) // window_ms * window_ms
    last = max(all_ts) // window_ms * window_ms
    windows = {}
    for start in range(first, last + window_ms, window_ms):
        windows[start] = EnvWindowStats(window_start=start, window_end=start + window_ms)
    for series, prefix in ((noise, "noise"), (light, "light")):
        buckets: dict[int, list[float]] = {}
        for ts, value in series:
            buckets.setdefault(ts // window_ms * window_ms, []).append(value)
        for start, values in buckets.items():
            w = windows[start]
            w.sample_count += len(values)
            setattr(w, f"{prefix}_mean", sum(values) / len(values))
            setattr(w, f"{prefix}_max", max(values))
    return [windows[k] for k in sorted(windows)]


# -- interval machinery -----------------------------------------------------------


def _intervals_from_flags(
    samples: Sequence[tuple[int, bool]], period_ms: int
) -> list[tuple[int, int]]:
    """Maximal [start, end) intervals where the flag holds; each sample covers
    [ts, ts + period)."""
    intervals: list[tuple[int, int]] = []
    for ts, flag in samples:
        if not flag:
            continue
        if intervals and ts <= intervals[-1][1]:
            intervals[-1] = (intervals[-1][0], max(intervals[-1][1], ts + period_ms))
        else:
            intervals.append((ts, ts + period_ms))
    return intervals


def _merge_intervals(intervals: list[tuple[int, int]], merge_gap_ms: int) -> list[tuple[int, int]]:
    merged: list[tuple[int, int]] = []
    for start, end in intervals:
        if merged and start - merged[-1][1] < merge_gap_ms:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def _minute_of_day(ts_ms: int, tz_offset_min: int) -> int:
    return ((ts_ms + tz_offset_min * 60_000) % DAY_MS) // 60_000


def in_day_window(ts_ms: int, tz_offset_min: int = 0) -> bool:
    return DAY_START_MIN <= _minute_of_day(ts_ms, tz_offset_min) < DAY_END_MIN


# -- visitation -----------------------------------------------------------------


def visitation(
    counts: Sequence[tuple[int, int | None]],
    period_ms: int = 1000,
    min_count: int = VISIT_MIN_COUNT,
    min_duration_ms: int = VISIT_MIN_DURATION_MS,
    merge_gap_ms: int = VISIT_MERGE_GAP_MS,
    tz_offset_min: int = 0,
) -> tuple[int, int]:
    """Count visits: merged intervals of >= min_count persons lasting long
    enough, attributed to day or night by their start time."""
    flags = [(ts, c is not None and c >= min_count) for ts, c in counts]
    intervals = _merge_intervals(_intervals_from_flags(flags, period_ms), merge_gap_ms)
    day = night = 0
    for start, end in intervals:
        if end - start < min_duration_ms:
            continue
        if in_day_window(start, tz_offset_min):
            day += 1
        else:
            night += 1
    return day, night


# -- nightly disruptions ----------------------------------------------------------


def _night_key(ts_ms: int, tz_offset_min: int) -> int:
    """Identify the night containing ts by the UTC-ms start of its 19:00."""
    local = ts_ms + tz_offset_min * 60_000
    day = local // DAY_MS
    minute = _minute_of_day(ts_ms, tz_offset_min)
    if minute >= DAY_END_MIN:
        night_day = day
    else:
        night_day = day - 1
    return night_day * DAY_MS + DAY_END_MIN * 60_000 - tz_offset_min * 60_000


def nightly_disruptions(
    noise: Sequence[tuple[int, float]],
    light: Sequence[tuple[int, float]],
    period_ms: int = 1000,
    light_thr: float = DISRUPTION_LIGHT_THR,
    noise_thr: float = DISRUPTION_NOISE_THR,
    min_duration_ms: int = DISRUPTION_MIN_DURATION_MS,
    merge_gap_ms: int = DISRUPTION_MERGE_GAP_MS,
    tz_offset_min: int = 0,
) -> dict[int, int]:
    """Disruption count per night (keyed by the night's 19:00 start in UTC ms).

    A disruption is a maximal night-time interval with light above light_thr
    OR noise above noise_thr, after merging short gaps, lasting min_duration.
    """
    violated: dict[int, bool] = {}
    for ts, v in noise:
        if v > noise_thr:
            violated[ts] = True
    for ts, v in light:
        if v > light_thr:
            violated[ts] = True
    night_samples = [
        (ts, True) for ts in sorted(violated) if not in_day_window(ts, tz_offset_min)
    ]
    by_night: dict[int, list[tuple[int, bool]]] = {}
    for ts, flag in night_samples:
        by_night.setdefault(_night_key(ts, tz_offset_min), []).append((ts, flag))
    out: dict[int, int] = {}
    for night, samples in sorted(by_night.items()):
        intervals = _merge_intervals(_intervals_from_flags(samples, period_ms), merge_gap_ms)
        count = sum(1 for s, e in intervals if e - s >= min_duration_ms)
        if count:
            out[night] = count
    return out
