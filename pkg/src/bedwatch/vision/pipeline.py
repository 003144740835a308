"""Annotation-candidate pipelines.

Face route: pain-window filter -> frame extraction -> single-face crop.
Depth route: colormap render -> person filter -> similarity dedup.
Every operation is a pure function; dedup is the only sequential pass and
is prefix-stable over time-ordered input.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core.types import BedwatchError
from .colormap import DEPTH_COLOR_TABLE
from .images import ColorImage, DepthFrame, Detection, GrayImage

log = logging.getLogger(__name__)

PAIN_WINDOW_MS = 3_600_000
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2
DEDUP_THRESHOLD = 0.95


class PipelineError(BedwatchError):
    pass


def filter_by_pain_window(
    frame_ts: Sequence[int], pain_ts: Sequence[int], window_ms: int = PAIN_WINDOW_MS
) -> list[int]:
    """Keep timestamps within +-window_ms (inclusive) of any pain report."""
    if not pain_ts:
        return []
    pains = sorted(pain_ts)
    kept = []
    for t in frame_ts:
        i = bisect.bisect_left(pains, t)
        near = []
        if i < len(pains):
            near.append(pains[i])
        if i > 0:
            near.append(pains[i - 1])
        if any(abs(t - p) <= window_ms for p in near):
            kept.append(t)
    return kept


def extract_frames(timestamps: Sequence[int], fps: float = 1.0) -> list[int]:
    """Resample a time-ordered sequence to at most fps frames per second.

    Greedy bucket-first selection: the first frame opens a bucket; the next
    kept frame is the first one at least one period later, so output frames
    are always spaced >= 1/fps apart.
    """
    if fps <= 0:
        raise PipelineError(f"fps must be positive, got {fps}")
    period_ms = 1000.0 / fps
    kept: list[int] = []
    for ts in timestamps:
        if kept and ts < kept[0]:
            raise PipelineError("timestamps must be time-ordered")
        if not kept or ts >= kept[-1] + period_ms:
            kept.append(ts)
    return kept


@dataclass
class FilterStats:
    examined: int = 0
    kept: int = 0
    detector_failures: int = 0
    dropped_counts: dict[int, int] = field(default_factory=dict)


def filter_single_face(
    frames: Sequence[tuple[object, ColorImage]],
    face_detector: Callable[[ColorImage], list[Detection]],
) -> tuple[list[tuple[object, ColorImage, Detection]], FilterStats]:
    """Keep frames with exactly one face; emit the face crop.

    Zero faces means an empty or occluded view; several faces are likely
    visitors or staff. Either way the frame is discarded.
    """
    crops = []
    stats = FilterStats()
    for frame_id, image in frames:
        stats.examined += 1
        try:
            detections = face_detector(image)
        except Exception as exc:
            stats.detector_failures += 1
            log.warning("face detector failed on %s: %s", frame_id, exc)
            continue
        if len(detections) != 1:
            stats.dropped_counts[len(detections)] = stats.dropped_counts.get(len(detections), 0) + 1
            continue
        det = detections[0].clipped_to(image.width, image.height)
        crop = image.pixels[det.y : det.y + det.h, det.x : det.x + det.w]
        crops.append((frame_id, ColorImage(np.ascontiguousarray(crop)), det))
        stats.kept += 1
    return crops, stats


def depth_to_colormap(frame: DepthFrame, clip: tuple[float, float] = (1.0, 99.0)) -> ColorImage:
    """Clip to [p_lo, p_hi] percentiles, normalize, map through the table.

    Percentiles are exact order statistics (lower method), which makes the
    outlier contract testable bit-for-bit: replacing everything above p99
    with p99 yields the identical image.
    """
    depths = frame.depth_mm.astype(np.float64)
    lo = float(np.percentile(depths, clip[0], method="lower"))
    hi = float(np.percentile(depths, clip[1], method="lower"))
    if hi <= lo:
        indices = np.zeros(depths.shape, dtype=np.uint8)
    else:
        clipped = np.clip(depths, lo, hi)
        indices = np.floor((clipped - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)
    return ColorImage(DEPTH_COLOR_TABLE[indices])


def filter_person_frames(
    frames: Sequence[tuple[object, DepthFrame]],
    person_detector: Callable[[DepthFrame], list[Detection]],
) -> tuple[list[tuple[object, DepthFrame, list[Detection]]], FilterStats]:
    """Keep depth frames containing at least one detected person."""
    kept = []
    stats = FilterStats()
    for frame_id, frame in frames:
        stats.examined += 1
        try:
            detections = person_detector(frame)
        except Exception as exc:
            stats.detector_failures += 1
            log.warning("person detector failed on %s: %s", frame_id, exc)
            continue
        if detections:
            kept.append((frame_id, frame, detections))
            stats.kept += 1
        else:
            stats.dropped_counts[0] = stats.dropped_counts.get(0, 0) + 1
    return kept, stats


def ssim(a: GrayImage, b: GrayImage) -> float:
    """Whole-image structural similarity from global statistics.

    (2*mu_a*mu_b + C1)(2*cov_ab + C2)
    ---------------------------------   with population (co)variances,
    (mu_a^2 + mu_b^2 + C1)(var_a + var_b + C2)
    C1 = (0.01*255)^2, C2 = (0.03*255)^2.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise PipelineError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    pa = a.pixels.astype(np.float64).ravel()
    pb = b.pixels.astype(np.float64).ravel()
    mu_a = pa.mean()
    mu_b = pb.mean()
    var_a = pa.var()
    var_b = pb.var()
    cov = ((pa - mu_a) * (pb - mu_b)).mean()
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(num / den)


def dedup_successive(
    frames: Sequence[tuple[object, GrayImage]], threshold: float = DEDUP_THRESHOLD
) -> list[object]:
    """Keep a frame iff it differs enough from the last *kept* frame.

    Comparing against the last kept frame (not the immediate predecessor)
    stops a slow drift from sneaking every frame under the threshold.
    """
    kept_ids: list[object] = []
    last_kept: GrayImage | None = None
    for frame_id, image in frames:
        if last_kept is None or ssim(last_kept, image) < threshold:
            kept_ids.append(frame_id)
            last_kept = image
    return kept_ids
