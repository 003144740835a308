from .health import LIVE, OFFLINE, STALE, HealthRegistry, stale_threshold_ms
from .pipeline import ACK, REJECT, IngestPipeline, IngestResult
from .preview import PreviewFrame, PreviewHub
from .sessions import (
    ClinicalFeed,
    ClinicalFeedError,
    SessionMap,
    SessionOverlapError,
    pseudonymize,
    slice_sessions,
)
from .storage import DUPLICATE, STORED, RecordStore, StorageError, day_of

__all__ = [
    "ACK",
    "ClinicalFeed",
    "ClinicalFeedError",
    "DUPLICATE",
    "HealthRegistry",
    "IngestPipeline",
    "IngestResult",
    "LIVE",
    "OFFLINE",
    "PreviewFrame",
    "PreviewHub",
    "REJECT",
    "RecordStore",
    "STALE",
    "STORED",
    "SessionMap",
    "SessionOverlapError",
    "StorageError",
    "day_of",
    "pseudonymize",
    "slice_sessions",
    "stale_threshold_ms",
]
