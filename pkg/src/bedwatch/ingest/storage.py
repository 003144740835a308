"""Idempotent record storage: plain files plus replayable manifests.

Layout under the root:
    data/<study_id>/<MODALITY>/<YYYY-MM-DD>/<cart>_<sensor>_<seq>.bin
    data/<study_id>/manifests/<YYYY-MM-DD>.jsonl
    quarantine/<cart>_<sensor>_<seq>.bin + quarantine/manifest.jsonl

One file per RecordKey; the manifest line is appended (and flushed) before
the broker delivery is acked, so replaying manifests after a restart
rebuilds the exact dedup set.
"""

from __future__ import annotations

import json
import os
from datetime import datetime, timezone
from pathlib import Path

from ..core.codec import encode_envelope
from ..core.types import BedwatchError, RecordEnvelope, RecordKey

STORED = "stored"
DUPLICATE = "duplicate"


class StorageError(BedwatchError):
    pass


def day_of(ts_ms: int) -> str:
    return datetime.fromtimestamp(ts_ms / 1000.0, tz=timezone.utc).strftime("%Y-%m-%d")


class RecordStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.data_dir = self.root / "data"
        self.quarantine_dir = self.root / "quarantine"
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.quarantine_dir.mkdir(parents=True, exist_ok=True)
        self._seen: set[RecordKey] = set()
        self._manifest_fds: dict[Path, object] = {}
        self._replay()

    def _replay(self) -> None:
        for manifest in self.data_dir.glob("*/manifests/*.jsonl"):
            for line in manifest.read_text().splitlines():
                if not line.strip():
                    continue
                doc = json.loads(line)
                self._seen.add(RecordKey(doc["cart_id"], doc["sensor_id"], doc["seq"]))

    def __contains__(self, key: RecordKey) -> bool:
        return key in self._seen

    def store(self, env: RecordEnvelope, study_id: str) -> str:
        """Write file + manifest line durably; duplicate keys are no-ops."""
        if env.key in self._seen:
            return DUPLICATE
        day = day_of(env.capture_ts)
        rel = Path(study_id) / env.modality.value / day
        dir_path = self.data_dir / rel
        dir_path.mkdir(parents=True, exist_ok=True)
        file_path = dir_path / f"{env.key.cart_id}_{env.key.sensor_id}_{env.key.seq}.bin"
        blob = encode_envelope(env)
        with open(file_path, "wb") as fh:
            fh.write(blob)
            fh.flush()
            os.fsync(fh.fileno())
        manifest_path = self.data_dir / study_id / "manifests" / f"{day}.jsonl"
        line = {
            "cart_id": env.key.cart_id,
            "sensor_id": env.key.sensor_id,
            "seq": env.key.seq,
            "capture_ts": env.capture_ts,
            "modality": env.modality.value,
            "payload_hash": env.payload_hash.hex(),
            "path": str(rel / file_path.name),
        }
        self._append_manifest(manifest_path, line)
        self._seen.add(env.key)
        return STORED

    def quarantine(self, env: RecordEnvelope | None, raw: bytes, reason: str) -> None:
        """Park a record that cannot be ingested; never silently dropped."""
        if env is not None:
            name = f"{env.key.cart_id}_{env.key.sensor_id}_{env.key.seq}.bin"
        else:
            import zlib

            name = f"undecodable_{zlib.crc32(raw):08x}.bin"
        path = self.quarantine_dir / name
        with open(path, "wb") as fh:
            fh.write(raw)
            fh.flush()
            os.fsync(fh.fileno())
        self._append_manifest(
            self.quarantine_dir / "manifest.jsonl",
            {"file": name, "reason": reason},
        )

    def _append_manifest(self, path: Path, doc: dict) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = self._manifest_fds.get(path)
        if fh is None:
            fh = open(path, "a", encoding="utf-8")
            self._manifest_fds[path] = fh
        fh.write(json.dumps(doc, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())

    # -- read side ------------------------------------------------------------

    def manifest_keys(self, study_id: str | None = None) -> list[RecordKey]:
        pattern = f"{study_id}/manifests/*.jsonl" if study_id else "*/manifests/*.jsonl"
        keys = []
        for manifest in sorted(self.data_dir.glob(pattern)):
            for line in manifest.read_text().splitlines():
                if line.strip():
                    doc = json.loads(line)
                    keys.append(RecordKey(doc["cart_id"], doc["sensor_id"], doc["seq"]))
        return keys

    def manifest_rows(self, study_id: str) -> list[dict]:
        rows = []
        for manifest in sorted((self.data_dir / study_id / "manifests").glob("*.jsonl")):
            for line in manifest.read_text().splitlines():
                if line.strip():
                    rows.append(json.loads(line))
        return rows

    def studies(self) -> list[str]:
        return sorted(p.name for p in self.data_dir.iterdir() if p.is_dir())

    def read_record(self, rel_path: str) -> bytes:
        return (self.data_dir / rel_path).read_bytes()

    def close(self) -> None:
        for fh in self._manifest_fds.values():
            fh.close()
        self._manifest_fds.clear()
