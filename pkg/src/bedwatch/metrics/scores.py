"""Clinical score series from the file-based clinical feed.

The stub plugins map the latest vitals row to a [0,1] score on a regular
grid (hourly by default). A real model adapter would plug in behind the
same acuity kind.
"""

from __future__ import annotations

import logging
from typing import Sequence

from ..core.types import PatientSession
from .plugins import KIND_ACUITY, InferencePlugin, PluginError
from .series import HOUR_MS, MetricPoint

log = logging.getLogger(__name__)


def score_series(
    study_id: str,
    metric: str,
    plugin: InferencePlugin,
    vitals: Sequence[dict],
    session: PatientSession,
    interval_ms: int = HOUR_MS,
) -> list[MetricPoint]:
    """Evaluate the plugin on the most recent vitals at each grid point.

    Grid points are aligned to the epoch interval and clipped to the
    session. An empty feed yields an empty series with a warning.
    """
    if plugin.kind != KIND_ACUITY:
        raise PluginError(f"plugin {plugin.name!r} has kind {plugin.kind}, need {KIND_ACUITY}")
    rows = sorted(
        (r for r in vitals if r.get("room_id") == session.room_id
         and session.covers(int(r["ts"]))),
        key=lambda r: int(r["ts"]),
    )
    if not rows:
        log.warning("no vitals rows for %s; emitting empty %s series", study_id, metric)
        return []
    points = []
    first_grid = (session.admission_ts + interval_ms - 1) // interval_ms * interval_ms
    idx = -1
    for ts in range(first_grid, session.discharge_ts, interval_ms):
        while idx + 1 < len(rows) and int(rows[idx + 1]["ts"]) <= ts:
            idx += 1
        if idx < 0:
            continue  # no vitals observed yet at this grid point
        value = plugin(rows[idx])
        points.append(MetricPoint(study_id, metric, ts, float(value)))
    return points
