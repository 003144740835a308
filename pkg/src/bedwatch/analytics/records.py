"""Annotation records and the append-only annotation store.

One line-delimited JSON file per task (face, depth). The webui writes
through the server API; the CLI can bulk-import. Records are immutable
once appended.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..core.types import BedwatchError, InvariantError
from ..core.vocab import BOX_LABELS, FACE_LABELS

TASK_FACE = "face"
TASK_DEPTH = "depth"


class AnnotationError(BedwatchError):
    pass


@dataclass(frozen=True)
class AuAnnotation:
    annotator_id: str
    item_id: str
    labels: frozenset[str]
    started_ts: int
    submitted_ts: int
    comment: str | None = None
    skipped: bool = False

    def __post_init__(self):
        if not self.annotator_id or not self.item_id:
            raise InvariantError("annotator_id and item_id must be non-empty")
        if self.submitted_ts < self.started_ts:
            raise InvariantError("submitted_ts must be >= started_ts")
        bad = set(self.labels) - set(FACE_LABELS)
        if bad:
            raise InvariantError(f"labels outside the face vocabulary: {sorted(bad)}")

    def to_dict(self) -> dict:
        return {
            "task": TASK_FACE,
            "annotator_id": self.annotator_id,
            "item_id": self.item_id,
            "labels": sorted(self.labels),
            "started_ts": self.started_ts,
            "submitted_ts": self.submitted_ts,
            "comment": self.comment,
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuAnnotation":
        return cls(
            annotator_id=d["annotator_id"],
            item_id=d["item_id"],
            labels=frozenset(d.get("labels", ())),
            started_ts=int(d["started_ts"]),
            submitted_ts=int(d["submitted_ts"]),
            comment=d.get("comment"),
            skipped=bool(d.get("skipped", False)),
        )


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float
    label: str

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise InvariantError("box must have positive width and height")
        if self.label not in BOX_LABELS:
            raise InvariantError(f"unknown box label {self.label!r}")

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "Box":
        return cls(float(d["x"]), float(d["y"]), float(d["w"]), float(d["h"]), d["label"])


@dataclass(frozen=True)
class BoxAnnotation:
    annotator_id: str
    item_id: str
    boxes: tuple[Box, ...]
    started_ts: int
    submitted_ts: int
    comment: str | None = None
    skipped: bool = False

    def __post_init__(self):
        if not self.annotator_id or not self.item_id:
            raise InvariantError("annotator_id and item_id must be non-empty")
        if self.submitted_ts < self.started_ts:
            raise InvariantError("submitted_ts must be >= started_ts")

    def to_dict(self) -> dict:
        return {
            "task": TASK_DEPTH,
            "annotator_id": self.annotator_id,
            "item_id": self.item_id,
            "boxes": [b.to_dict() for b in self.boxes],
            "started_ts": self.started_ts,
            "submitted_ts": self.submitted_ts,
            "comment": self.comment,
            "skipped": self.skipped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoxAnnotation":
        return cls(
            annotator_id=d["annotator_id"],
            item_id=d["item_id"],
            boxes=tuple(Box.from_dict(b) for b in d.get("boxes", ())),
            started_ts=int(d["started_ts"]),
            submitted_ts=int(d["submitted_ts"]),
            comment=d.get("comment"),
            skipped=bool(d.get("skipped", False)),
        )


@dataclass(frozen=True)
class ModelPrediction:
    """One model's output for one item: per-AU probabilities or proposed boxes."""

    model_id: str
    item_id: str
    au_probs: dict[str, float] = field(default_factory=dict)
    boxes: tuple[tuple[Box, float], ...] = ()  # (box, confidence)

    def __post_init__(self):
        for label, p in self.au_probs.items():
            if not (0.0 <= p <= 1.0):
                raise InvariantError(f"probability for {label} out of range: {p}")
        for _, conf in self.boxes:
            if not (0.0 <= conf <= 1.0):
                raise InvariantError(f"box confidence out of range: {conf}")


class AnnotationStore:
    """Append-only JSONL store, one file per task."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, task: str) -> Path:
        if task not in (TASK_FACE, TASK_DEPTH):
            raise AnnotationError(f"unknown task {task!r}")
        return self.root / f"{task}_annotations.jsonl"

    def append(self, annotation: AuAnnotation | BoxAnnotation) -> None:
        task = TASK_FACE if isinstance(annotation, AuAnnotation) else TASK_DEPTH
        with open(self._path(task), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(annotation.to_dict(), sort_keys=True) + "\n")

    def load(self, task: str) -> list[AuAnnotation] | list[BoxAnnotation]:
        path = self._path(task)
        if not path.exists():
            return []
        cls = AuAnnotation if task == TASK_FACE else BoxAnnotation
        out = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                out.append(cls.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, InvariantError) as exc:
                raise AnnotationError(f"{path}:{lineno}: bad record: {exc}") from None
        return out
