"""Deterministic mock detectors matched to the synthetic sensor streams.

These are pure pixel functions standing behind the same interface a real
face or person model adapter would implement: image in, detections out.
The face detector finds bright connected blobs; the person detector finds
near-range silhouettes in depth frames.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .images import ColorImage, DepthFrame, Detection, GrayImage

FACE_BRIGHTNESS_THR = 180
FACE_MIN_AREA = 30
PERSON_DEPTH_THR_MM = 3000
PERSON_MIN_AREA = 40


def _connected_components(mask: np.ndarray, min_area: int) -> list[tuple[int, int, int, int]]:
    """4-connected component bounding boxes (x, y, w, h), left-to-right order."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    boxes = []
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or seen[y, x]:
                continue
            q = deque([(y, x)])
            seen[y, x] = True
            ys, xs = [], []
            while q:
                cy, cx = q.popleft()
                ys.append(cy)
                xs.append(cx)
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        q.append((ny, nx))
            if len(xs) >= min_area:
                x0, x1 = min(xs), max(xs)
                y0, y1 = min(ys), max(ys)
                boxes.append((x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    boxes.sort(key=lambda b: (b[0], b[1]))
    return boxes


def detect_faces(image: ColorImage | GrayImage) -> list[Detection]:
    pixels = image.pixels if isinstance(image, GrayImage) else image.pixels.max(axis=2)
    mask = pixels > FACE_BRIGHTNESS_THR
    return [
        Detection("face", x, y, w, h, 1.0)
        for x, y, w, h in _connected_components(mask, FACE_MIN_AREA)
    ]


def detect_persons(frame: DepthFrame) -> list[Detection]:
    mask = frame.depth_mm < PERSON_DEPTH_THR_MM
    return [
        Detection("person", x, y, w, h, 1.0)
        for x, y, w, h in _connected_components(mask, PERSON_MIN_AREA)
    ]
