"""Box-level analytics: IoU matching and greedy weighted clustering.

Box annotations from different annotators are clustered per label; cluster
agreement (how much annotator weight contributed a box) drives the
per-cluster re-annotation priority.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from ..core.types import BedwatchError
from .consensus import ActiveLearningScore
from .records import Box, BoxAnnotation

DEFAULT_IOU_THR = 0.5


class BoxAnalyticsError(BedwatchError):
    pass


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes; disjoint -> 0."""
    ax, ay, aw, ah = (a.x, a.y, a.w, a.h) if isinstance(a, Box) else a
    bx, by, bw, bh = (b.x, b.y, b.w, b.h) if isinstance(b, Box) else b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise BoxAnalyticsError("boxes must have positive size")
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    union = aw * ah + bw * bh - inter
    return inter / union


@dataclass
class BoxCluster:
    label: str
    members: list[tuple[str, Box]]  # (annotator_id, box)
    rep: tuple[float, float, float, float]
    agreement: float = 0.0
    priority: float = 1.0


def _weighted_mean_box(members: Sequence[tuple[str, Box]], weights: Mapping[str, float]):
    total = sum(weights.get(a, 0.0) for a, _ in members)
    if total <= 0.0:
        # all-zero weights degenerate to an unweighted mean
        total = float(len(members))
        contribs = [(1.0, b) for _, b in members]
    else:
        contribs = [(weights.get(a, 0.0), b) for a, b in members]
    x = sum(w * b.x for w, b in contribs) / total
    y = sum(w * b.y for w, b in contribs) / total
    w_ = sum(w * b.w for w, b in contribs) / total
    h = sum(w * b.h for w, b in contribs) / total
    return (x, y, w_, h)


def cluster_boxes(
    annotations: Sequence[BoxAnnotation],
    weights: Mapping[str, float],
    iou_thr: float = DEFAULT_IOU_THR,
) -> tuple[list[BoxCluster], ActiveLearningScore]:
    """Greedy same-label clustering ordered by annotator weight.

    Boxes are visited sorted by (annotator weight desc, annotator_id,
    drawing order), so the output is independent of input ordering. A box
    joins the first cluster of its label whose representative box (the
    weighted mean of members) overlaps at IoU >= iou_thr, with at most one
    box per annotator per cluster; otherwise it founds a new cluster.
    """
    live = [a for a in annotations if not a.skipped]
    if not live:
        raise BoxAnalyticsError("cluster_boxes needs at least one annotation")
    item_ids = {a.item_id for a in live}
    if len(item_ids) != 1:
        raise BoxAnalyticsError(f"annotations span several items: {sorted(item_ids)}")
    (item_id,) = item_ids
    seen = set()
    for a in live:
        if a.annotator_id in seen:
            raise BoxAnalyticsError(f"duplicate annotation from {a.annotator_id!r}")
        seen.add(a.annotator_id)

    entries = []
    for a in live:
        for idx, box in enumerate(a.boxes):
            entries.append((-(weights.get(a.annotator_id, 0.0)), a.annotator_id, idx, box))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))

    clusters: list[BoxCluster] = []
    for _, annotator, _, box in entries:
        placed = False
        for cluster in clusters:
            if cluster.label != box.label:
                continue
            if any(a == annotator for a, _ in cluster.members):
                continue
            if iou(cluster.rep, box) >= iou_thr:
                cluster.members.append((annotator, box))
                cluster.rep = _weighted_mean_box(cluster.members, weights)
                placed = True
                break
        if not placed:
            clusters.append(
                BoxCluster(label=box.label, members=[(annotator, box)],
                           rep=(box.x, box.y, box.w, box.h))
            )

    # both sums run in the same sorted order, so full agreement divides two
    # bitwise-identical sums and yields exactly 1.0
    all_ids = sorted(a.annotator_id for a in live)
    total_weight = sum(weights.get(a, 0.0) for a in all_ids)
    per_class: dict[str, float] = {}
    for i, cluster in enumerate(clusters):
        contributing = {a for a, _ in cluster.members}
        mass = sum(weights.get(a, 0.0) for a in sorted(contributing))
        cluster.agreement = (mass / total_weight) if total_weight > 0 else 0.0
        cluster.priority = 1.0 - cluster.agreement
        per_class[f"cluster_{i}_{cluster.label}"] = cluster.priority
    item_priority = (
        sum(c.priority for c in clusters) / len(clusters) if clusters else 0.0
    )
    score = ActiveLearningScore(item_id, per_class, item_priority)
    return clusters, score
