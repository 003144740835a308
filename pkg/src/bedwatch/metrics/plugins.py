"""Pluggable inference layer with deterministic mock implementations.

A plugin is a named, versioned pure transform. Real model adapters would
register under the same kinds; the mocks here are pixel-level decoders
matched to the synthetic streams so the full path stays testable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from ..core.types import BedwatchError
from ..core.vocab import AU_LABELS
from ..vision.detectors import detect_persons
from ..vision.images import ColorImage, DepthFrame

KIND_FACE = "face_detect"
KIND_AU = "au_detect"
KIND_POSTURE = "posture_detect"
KIND_ACUITY = "acuity"

_KINDS = (KIND_FACE, KIND_AU, KIND_POSTURE, KIND_ACUITY)


class PluginError(BedwatchError):
    pass


@dataclass(frozen=True)
class InferencePlugin:
    name: str
    version: str
    kind: str
    fn: Callable

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise PluginError(f"unknown plugin kind {self.kind!r}")

    def __call__(self, *args, **kwargs):
        return self.fn(*args, **kwargs)


def run_au_inference(crop: ColorImage, plugin: InferencePlugin) -> dict[str, float]:
    """Per-AU probability map over the 12 annotated action units."""
    if plugin.kind != KIND_AU:
        raise PluginError(f"plugin {plugin.name!r} has kind {plugin.kind}, need {KIND_AU}")
    out = plugin(crop)
    if set(out) != set(AU_LABELS):
        raise PluginError(f"plugin {plugin.name!r} returned wrong AU keys")
    for label, p in out.items():
        if not (0.0 <= p <= 1.0):
            raise PluginError(f"probability for {label} out of range: {p}")
    return out


# -- mock AU detector ---------------------------------------------------------

# The synthetic face generator embeds a uniform 3x3 feature-code block whose
# channel values carry the AU bitmask (value = nibble*16 + 8). The block sits
# at 35% of the vertical semi-axis below the face center, which lands at
# relative crop coordinates (0.5, 0.675) for an ellipse-tight bbox.
_CODE_ROW_REL = 0.675
_CODE_COL_REL = 0.5


def _decode_feature_block(crop: ColorImage) -> dict[str, float]:
    px = crop.pixels
    h, w, _ = px.shape
    row = int(round(_CODE_ROW_REL * (h - 1)))
    col = int(round(_CODE_COL_REL * (w - 1)))
    pixel = px[min(row, h - 1), min(col, w - 1)]
    nibbles = [int(v) // 16 for v in pixel]
    mask = (nibbles[0] << 8) | (nibbles[1] << 4) | nibbles[2]
    return {label: 1.0 if mask & (1 << j) else 0.0 for j, label in enumerate(AU_LABELS)}


MOCK_AU_PLUGIN = InferencePlugin("mock-au-code-block", "1", KIND_AU, _decode_feature_block)


# -- mock posture/person detector ---------------------------------------------

MOCK_POSTURE_PLUGIN = InferencePlugin("mock-person-silhouette", "1", KIND_POSTURE, detect_persons)


def person_count_series(frames, plugin: InferencePlugin) -> list[tuple[int, int | None]]:
    """One integer count per time-ordered frame; plugin failures become gaps."""
    if plugin.kind != KIND_POSTURE:
        raise PluginError(f"plugin {plugin.name!r} has kind {plugin.kind}, need {KIND_POSTURE}")
    series: list[tuple[int, int | None]] = []
    for ts, frame in frames:
        try:
            series.append((ts, len(plugin(frame))))
        except Exception:
            series.append((ts, None))  # a gap, never a fabricated zero
    return series


# -- acuity stubs ---------------------------------------------------------------

ACUITY_WEIGHTS = {
    "heart_rate": (0.03, 80.0),
    "resp_rate": (0.10, 16.0),
    "spo2": (-0.08, 97.0),
    "sbp": (-0.02, 115.0),
    "temp_c": (0.60, 37.0),
}

DELIRIUM_WEIGHTS = {
    "heart_rate": (0.02, 80.0),
    "resp_rate": (0.25, 16.0),
    "spo2": (-0.05, 97.0),
    "sbp": (-0.01, 115.0),
    "temp_c": (0.90, 37.0),
}


def logistic_score(vitals: dict, weights: dict[str, tuple[float, float]]) -> float:
    """Logistic of a weighted sum of centered named variables, clamped to [0,1]."""
    z = 0.0
    for var, (weight, center) in weights.items():
        if var in vitals and vitals[var] is not None:
            z += weight * (float(vitals[var]) - center)
    return min(1.0, max(0.0, 1.0 / (1.0 + math.exp(-z))))


ACUITY_STUB_PLUGIN = InferencePlugin(
    "acuity-logistic-stub", "1", KIND_ACUITY, lambda v: logistic_score(v, ACUITY_WEIGHTS)
)
DELIRIUM_STUB_PLUGIN = InferencePlugin(
    "delirium-logistic-stub", "1", KIND_ACUITY, lambda v: logistic_score(v, DELIRIUM_WEIGHTS)
)
