from .colormap import DEPTH_COLOR_TABLE
from .detectors import detect_faces, detect_persons
from .images import ColorImage, DepthFrame, Detection, GrayImage, ImageError
from .pipeline import (
    DEDUP_THRESHOLD,
    PAIN_WINDOW_MS,
    FilterStats,
    PipelineError,
    dedup_successive,
    depth_to_colormap,
    extract_frames,
    filter_by_pain_window,
    filter_person_frames,
    filter_single_face,
    ssim,
)

__all__ = [
    "ColorImage",
    "DEDUP_THRESHOLD",
    "DEPTH_COLOR_TABLE",
    "DepthFrame",
    "Detection",
    "FilterStats",
    "GrayImage",
    "ImageError",
    "PAIN_WINDOW_MS",
    "PipelineError",
    "dedup_successive",
    "depth_to_colormap",
    "detect_faces",
    "detect_persons",
    "extract_frames",
    "filter_by_pain_window",
    "filter_person_frames",
    "filter_single_face",
    "ssim",
]
