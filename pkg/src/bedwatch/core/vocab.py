"""Annotation label vocabularies, shared by the simulators, the mock
detectors and the analytics layer."""

from __future__ import annotations

# Facial action units available for annotation, in canonical order.
AU_LABELS = (
    "AU4",   # brow lowerer
    "AU6",   # cheek raiser
    "AU7",   # lid tightener
    "AU9",   # nose wrinkler
    "AU10",  # upper lip raiser
    "AU12",  # lip corner puller
    "AU20",  # lip stretcher
    "AU24",  # lip pressor
    "AU25",  # lips part
    "AU26",  # jaw drop
    "AU27",  # mouth stretch
    "AU43",  # eyes closed
)

# Full face-annotation vocabulary: the 12 AUs plus the extra facial terms.
FACE_LABELS = AU_LABELS + ("smile", "wrinkled_forehead", "unclear")

# Depth bounding-box labels: posture plus assistance level.
BOX_LABELS = (
    "sitting",
    "standing",
    "assisted_1",
    "assisted_2",
    "assisted_wheelchair",
    "assisted_walker",
)
