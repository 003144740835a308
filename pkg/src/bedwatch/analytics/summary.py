"""Weekly annotation summaries: throughput per annotator plus per-label
inter-rater agreement over the items co-annotated that week."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from statistics import median

from ..core.vocab import BOX_LABELS, FACE_LABELS
from .agreement import KappaResult, kappa_for_ratings
from .records import TASK_DEPTH, TASK_FACE, AnnotationStore

MS_PER_HOUR = 3_600_000


def week_bounds(day: str | datetime) -> tuple[int, int]:
    """UTC millisecond range [Monday 00:00, next Monday 00:00) containing day."""
    if isinstance(day, str):
        day = datetime.strptime(day, "%Y-%m-%d")
    day = day.replace(tzinfo=timezone.utc, hour=0, minute=0, second=0, microsecond=0)
    monday = day - timedelta(days=day.weekday())
    start = int(monday.timestamp() * 1000)
    return start, start + 7 * 24 * MS_PER_HOUR


@dataclass
class AnnotatorSummary:
    annotator_id: str
    count: int = 0
    active_hours: float = 0.0
    median_seconds: float | None = None
    skipped: int = 0


@dataclass
class WeeklySummary:
    week_start: int
    week_end: int
    annotators: dict[str, AnnotatorSummary] = field(default_factory=dict)
    kappa_by_label: dict[str, KappaResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "week_start": self.week_start,
            "week_end": self.week_end,
            "annotators": {
                a: {
                    "count": s.count,
                    "active_hours": s.active_hours,
                    "median_seconds": s.median_seconds,
                    "skipped": s.skipped,
                }
                for a, s in sorted(self.annotators.items())
            },
            "kappa_by_label": {
                label: {
                    "kappa": None if math.isnan(r.kappa) else r.kappa,
                    "n_items": r.n_items,
                    "n_raters": r.n_raters,
                    "excluded_items": [repr(x) for x in r.excluded_items],
                }
                for label, r in sorted(self.kappa_by_label.items())
            },
        }


def weekly_summary(store: AnnotationStore, week_of: str | datetime) -> WeeklySummary:
    start, end = week_bounds(week_of)
    face = [a for a in store.load(TASK_FACE) if start <= a.submitted_ts < end]
    depth = [a for a in store.load(TASK_DEPTH) if start <= a.submitted_ts < end]
    out = WeeklySummary(week_start=start, week_end=end)

    durations: dict[str, list[float]] = {}
    for ann in [*face, *depth]:
        s = out.annotators.setdefault(ann.annotator_id, AnnotatorSummary(ann.annotator_id))
        if ann.skipped:
            s.skipped += 1
            continue
        s.count += 1
        s.active_hours += (ann.submitted_ts - ann.started_ts) / MS_PER_HOUR
        durations.setdefault(ann.annotator_id, []).append(
            (ann.submitted_ts - ann.started_ts) / 1000.0
        )
    for annotator, ds in durations.items():
        out.annotators[annotator].median_seconds = float(median(ds))

    # agreement: binary presence of each label, items with >= 2 raters
    for label in FACE_LABELS:
        ratings: dict[str, list[int]] = {}
        for ann in face:
            if ann.skipped:
                continue
            ratings.setdefault(ann.item_id, []).append(1 if label in ann.labels else 0)
        eligible = {k: v for k, v in ratings.items() if len(v) >= 2}
        if eligible:
            out.kappa_by_label[label] = kappa_for_ratings(eligible, (0, 1))
    for label in BOX_LABELS:
        ratings = {}
        for ann in depth:
            if ann.skipped:
                continue
            has = any(b.label == label for b in ann.boxes)
            ratings.setdefault(ann.item_id, []).append(1 if has else 0)
        eligible = {k: v for k, v in ratings.items() if len(v) >= 2}
        if eligible:
            out.kappa_by_label[label] = kappa_for_ratings(eligible, (0, 1))
    return out
