"""Image value types for the processing pipelines (numpy-backed, uint8/uint16)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.types import BedwatchError, InvariantError


class ImageError(BedwatchError):
    pass


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray  # (h, w) uint8

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 2 or p.dtype != np.uint8 or p.size == 0:
            raise InvariantError("GrayImage needs a non-empty 2-D uint8 array")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class ColorImage:
    pixels: np.ndarray  # (h, w, 3) uint8

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8 or p.size == 0:
            raise InvariantError("ColorImage needs a non-empty (h, w, 3) uint8 array")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_gray(self) -> GrayImage:
        """ITU-R BT.601 luma with integer rounding."""
        p = self.pixels.astype(np.uint32)
        gray = (299 * p[:, :, 0] + 587 * p[:, :, 1] + 114 * p[:, :, 2] + 500) // 1000
        return GrayImage(gray.astype(np.uint8))


@dataclass(frozen=True)
class DepthFrame:
    depth_mm: np.ndarray  # (h, w) uint16

    def __post_init__(self):
        d = self.depth_mm
        if d.ndim != 2 or d.dtype != np.uint16 or d.size == 0:
            raise InvariantError("DepthFrame needs a non-empty 2-D uint16 array")

    @property
    def width(self) -> int:
        return self.depth_mm.shape[1]

    @property
    def height(self) -> int:
        return self.depth_mm.shape[0]


@dataclass(frozen=True)
class Detection:
    """One detector hit: labelled box with confidence, inside image bounds."""

    label: str
    x: int
    y: int
    w: int
    h: int
    confidence: float

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvariantError("detection box must have positive size")
        if not (0.0 <= self.confidence <= 1.0):
            raise InvariantError("confidence must be in [0, 1]")

    def clipped_to(self, width: int, height: int) -> "Detection":
        x0 = max(0, self.x)
        y0 = max(0, self.y)
        x1 = min(width, self.x + self.w)
        y1 = min(height, self.y + self.h)
        if x1 <= x0 or y1 <= y0:
            raise ImageError("detection box lies outside the image")
        return Detection(self.label, x0, y0, x1 - x0, y1 - y0, self.confidence)
