"""Patient sessions, pseudonymization and session slicing.

The clinical feed (a line-delimited JSON file standing in for the hospital
data repository) supplies admissions/discharges, pain report timestamps and
vitals. Records are assigned to the session covering their capture time:
admission inclusive, discharge exclusive. Patient identity leaves this
module only as a keyed pseudonym.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..core.types import BedwatchError, InvariantError, PatientSession


class SessionOverlapError(BedwatchError):
    pass


class ClinicalFeedError(BedwatchError):
    pass


def pseudonymize(patient_id: str, scrub_key: bytes) -> str:
    """Deterministic keyed pseudonym: 16 hex chars, irreversible without the key."""
    return hmac.new(scrub_key, patient_id.encode("utf-8"), hashlib.sha256).hexdigest()[:16]


@dataclass
class SessionMap:
    """Sessions indexed by room, validated to be non-overlapping per room."""

    sessions: list[PatientSession] = field(default_factory=list)

    def __post_init__(self):
        by_room: dict[str, list[PatientSession]] = {}
        for s in self.sessions:
            by_room.setdefault(s.room_id, []).append(s)
        for room, sess in by_room.items():
            sess.sort(key=lambda s: s.admission_ts)
            for a, b in zip(sess, sess[1:]):
                if b.admission_ts < a.discharge_ts:
                    raise SessionOverlapError(
                        f"sessions overlap in room {room}: "
                        f"{a.study_id} and {b.study_id}"
                    )
        self._by_room = by_room

    def lookup(self, room_id: str, ts: int) -> PatientSession | None:
        for s in self._by_room.get(room_id, ()):
            if s.covers(ts):
                return s
        return None

    def for_study(self, study_id: str) -> list[PatientSession]:
        return [s for s in self.sessions if s.study_id == study_id]


def slice_sessions(records, session_map: SessionMap):
    """Partition (room_id, capture_ts, item) triples by study_id.

    Returns (partitions: dict[study_id, list[item]], unmatched: list[item]).
    """
    partitions: dict[str, list] = {}
    unmatched = []
    for room_id, capture_ts, item in records:
        s = session_map.lookup(room_id, capture_ts)
        if s is None:
            unmatched.append(item)
        else:
            partitions.setdefault(s.study_id, []).append(item)
    return partitions, unmatched


@dataclass
class ClinicalFeed:
    """Parsed clinical feed: sessions, pain timestamps, vitals rows."""

    sessions: SessionMap
    pain_events: list[dict]
    vitals: list[dict]

    @classmethod
    def load(cls, path: str | Path, scrub_key: bytes) -> "ClinicalFeed":
        path = Path(path)
        if not path.exists():
            raise ClinicalFeedError(f"clinical feed not found: {path}")
        sessions: list[PatientSession] = []
        pain: list[dict] = []
        vitals: list[dict] = []
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ClinicalFeedError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            kind = doc.get("type")
            if kind == "session":
                try:
                    sessions.append(
                        PatientSession(
                            patient_id=doc["patient_id"],
                            study_id=pseudonymize(doc["patient_id"], scrub_key),
                            room_id=doc["room_id"],
                            cart_id=doc["cart_id"],
                            admission_ts=int(doc["admission_ts"]),
                            discharge_ts=int(doc["discharge_ts"]),
                        )
                    )
                except (KeyError, InvariantError) as exc:
                    raise ClinicalFeedError(f"{path}:{lineno}: bad session: {exc}") from None
            elif kind == "pain":
                pain.append(doc)
            elif kind == "vitals":
                vitals.append(doc)
            else:
                raise ClinicalFeedError(f"{path}:{lineno}: unknown record type {kind!r}")
        return cls(sessions=SessionMap(sessions), pain_events=pain, vitals=vitals)

    def pain_timestamps(self, room_id: str) -> list[int]:
        return sorted(int(p["ts"]) for p in self.pain_events if p.get("room_id") == room_id)

    def pain_timestamps_for_study(self, study_id: str) -> list[int]:
        out = []
        for s in self.sessions.for_study(study_id):
            for p in self.pain_events:
                if p.get("room_id") == s.room_id and s.covers(int(p["ts"])):
                    out.append(int(p["ts"]))
        return sorted(out)
