"""The ingest pipeline: authenticate, unseal, slice, store, then ack.

At-least-once delivery plus this idempotent sink is what turns the
transport contract into exactly-once-at-rest. A delivery is acked only
after the record (or its quarantine entry) is durable; unseal failures are
retried via redelivery and quarantined after a bounded number of attempts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from ..core.codec import EnvelopeDecodeError, decode_envelope
from ..core.types import RecordEnvelope, RecordKey
from ..edge.sealing import UnsealError, unseal_payload
from .sessions import SessionMap
from .storage import DUPLICATE, STORED, RecordStore

log = logging.getLogger(__name__)

POISON_ATTEMPTS = 5

ACK = "ack"
REJECT = "reject"  # leave unacked: broker will redeliver


@dataclass
class IngestResult:
    disposition: str  # ACK or REJECT
    outcome: str  # stored | duplicate | quarantined | retry
    envelope: RecordEnvelope | None = None
    study_id: str | None = None


class IngestPipeline:
    def __init__(self, store: RecordStore, sessions: SessionMap, keys: dict[str, bytes]):
        self.store = store
        self.sessions = sessions
        self.keys = keys
        self._attempts: dict[RecordKey, int] = {}
        self._undecodable_attempts: dict[bytes, int] = {}

    def ingest_bytes(self, raw: bytes) -> IngestResult:
        """Process one delivered envelope encoding."""
        try:
            env = decode_envelope(raw)
        except EnvelopeDecodeError as exc:
            return self._poison(None, raw, f"undecodable envelope: {exc}")
        if env.key in self.store:
            return IngestResult(ACK, DUPLICATE, env)
        key = self.keys.get(env.cipher.key_id)
        if key is None:
            return self._poison(env, raw, f"unknown key_id {env.cipher.key_id!r}")
        try:
            unseal_payload(env, key)
        except UnsealError as exc:
            return self._poison(env, raw, f"unseal failed: {exc}")
        session = self.sessions.lookup(env.room_id, env.capture_ts)
        if session is None:
            self.store.quarantine(env, raw, "no session covers capture_ts")
            return IngestResult(ACK, "quarantined", env)
        outcome = self.store.store(env, session.study_id)
        assert outcome in (STORED, DUPLICATE)
        return IngestResult(ACK, outcome, env, session.study_id)

    def _poison(self, env: RecordEnvelope | None, raw: bytes, reason: str) -> IngestResult:
        """Reject for redelivery; quarantine after POISON_ATTEMPTS tries."""
        token = env.key if env is not None else bytes(raw[:64])
        attempts = self._attempts.get(token, 0) + 1
        self._attempts[token] = attempts
        if attempts >= POISON_ATTEMPTS:
            log.warning("quarantining poison message after %d attempts: %s", attempts, reason)
            self.store.quarantine(env, raw, reason)
            self._attempts.pop(token, None)
            return IngestResult(ACK, "quarantined", env)
        log.warning("rejecting message (attempt %d): %s", attempts, reason)
        return IngestResult(REJECT, "retry", env)
