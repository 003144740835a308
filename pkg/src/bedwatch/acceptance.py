"""The acceptance suite: one callable per criterion, runnable via the CLI.

Each criterion returns (passed, detail). Tolerances are pinned here and
asserted exactly as stated; the pytest acceptance module drives the same
functions and prints one line per criterion.
"""

from __future__ import annotations

import hashlib
import math
import random
import tempfile
import time
from pathlib import Path

import numpy as np

from .analytics import (
    ModelPrediction,
    al_score_labeled,
    al_score_unlabeled,
    cluster_boxes,
    consensus,
    ensemble_weights,
    expected_calibration_error,
    fleiss_kappa,
    iou,
)
from .analytics.records import AuAnnotation, Box, BoxAnnotation
from .core.codec import encode_envelope
from .core.payloads import decode_image
from .core.types import Modality, PatientSession, RecordKey
from .core.vocab import AU_LABELS
from .edge.sealing import deterministic_nonce, seal_payload
from .edge.sim import Scenario, SensorSimConfig, generate_tick
from .ingest.pipeline import IngestPipeline
from .ingest.sessions import SessionMap, pseudonymize
from .ingest.storage import RecordStore
from .metrics import env_stats, nightly_disruptions, visitation
from .simrun import SimFault, SimRun, default_cart_specs
from .vision import (
    ColorImage,
    GrayImage,
    dedup_successive,
    detect_faces,
    filter_by_pain_window,
    filter_single_face,
    ssim,
)

HOUR_MS = 3_600_000


def _tmpdir(workdir: str | Path | None, name: str) -> Path:
    if workdir is None:
        return Path(tempfile.mkdtemp(prefix=f"accept_{name}_"))
    path = Path(workdir) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- criterion 1: zero-loss delivery ------------------------------------------------


def criterion_1_zero_loss(workdir=None) -> tuple[bool, str]:
    """6 carts, >= 10,000 envelopes, 3 outages and one crash: stored set
    equals enqueued set exactly, zero manifest duplicates, under 5 minutes."""
    t0 = time.monotonic()
    work = _tmpdir(workdir, "c1_zero_loss")
    specs = default_cart_specs(6, frame_w=48, frame_h=36)
    faults = [
        SimFault("net-down", "c1", at_s=20, duration_s=30),
        SimFault("net-down", "c3", at_s=90, duration_s=10),
        SimFault("net-down", "c5", at_s=150, duration_s=20),
        SimFault("crash", "c2", at_s=60),
    ]
    run = SimRun(work, specs, duration_s=300, faults=faults)
    res = run.run()
    run.close()
    elapsed = time.monotonic() - t0
    ok = (
        res.zero_loss
        and res.manifest_duplicates == 0
        and len(res.enqueued_keys) >= 10_000
        and elapsed < 300.0
    )
    detail = (
        f"enqueued={len(res.enqueued_keys)} stored={len(res.stored_keys)} "
        f"set_equal={res.enqueued_keys == res.stored_keys} "
        f"manifest_dupes={res.manifest_duplicates} wall={elapsed:.1f}s"
    )
    return ok, detail


# -- criterion 2: bounded backlog ---------------------------------------------------


def criterion_2_bounded_backlog(workdir=None) -> tuple[bool, str]:
    """Nominal connectivity at the configured rates for 3 minutes: pending
    depth < 64 per sensor and no pending entry older than 5 s."""
    work = _tmpdir(workdir, "c2_backlog")
    specs = default_cart_specs(1, frame_w=48, frame_h=36)
    run = SimRun(work, specs, duration_s=180)
    res = run.run()
    run.close()
    max_depth = max(res.max_pending_depth.values(), default=0)
    max_age = max(res.max_pending_age_ms.values(), default=0)
    ok = res.zero_loss and max_depth < 64 and max_age <= 5000
    return ok, f"max_depth={max_depth} max_age_ms={max_age} envelopes={len(res.enqueued_keys)}"


# -- criterion 3: Fleiss kappa ------------------------------------------------------


def criterion_3_fleiss_kappa(workdir=None) -> tuple[bool, str]:
    hand = fleiss_kappa([[2, 1], [0, 3]], 3)
    ok_hand = abs(hand - 0.25) <= 1e-9

    perfect = fleiss_kappa([[3, 0], [0, 3], [3, 0], [0, 3]], 3)
    ok_perfect = abs(perfect - 1.0) <= 1e-12

    rng = np.random.default_rng(314159)
    n_items, n_raters, k = 10_000, 3, 4
    counts = np.zeros((n_items, k), dtype=np.int64)
    votes = rng.integers(0, k, size=(n_items, n_raters))
    for i in range(n_items):
        for v in votes[i]:
            counts[i, v] += 1
    mc = fleiss_kappa(counts, n_raters)
    ok_mc = abs(mc) < 0.05

    ok = ok_hand and ok_perfect and ok_mc
    return ok, f"hand={hand:.12f} perfect={perfect} monte_carlo={mc:.5f}"


# -- criterion 4: ECE ----------------------------------------------------------------


def criterion_4_ece(workdir=None) -> tuple[bool, str]:
    hand = expected_calibration_error([(0.9, 1), (0.9, 0), (0.6, 1), (0.6, 0)])
    ok_hand = abs(hand - 0.25) <= 1e-9

    calibrated = []
    for conf, n in ((0.25, 8), (0.55, 20), (0.85, 20)):
        hits = int(round(conf * n))
        calibrated += [(conf, 1)] * hits + [(conf, 0)] * (n - hits)
    self_cal = expected_calibration_error(calibrated)
    ok_cal = abs(self_cal) <= 1e-12
    return ok_hand and ok_cal, f"hand={hand:.12f} self_calibrated={self_cal:.3e}"


# -- criterion 5: SSIM ----------------------------------------------------------------


def criterion_5_ssim(workdir=None) -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    img = GrayImage(rng.integers(0, 256, size=(32, 48)).astype(np.uint8))
    ident = ssim(img, img)
    ok_ident = abs(ident - 1.0) <= 1e-12

    black = GrayImage(np.zeros((16, 16), dtype=np.uint8))
    white = GrayImage(np.full((16, 16), 255, dtype=np.uint8))
    extremes = ssim(black, white)
    ok_extremes = abs(extremes - 9.999e-5) <= 1e-8

    frames = [(i, img) for i in range(7)]
    kept = dedup_successive(frames)
    ok_dedup = kept == [0]
    return (
        ok_ident and ok_extremes and ok_dedup,
        f"identity={ident} extremes={extremes:.9e} dedup_kept={len(kept)}/7",
    )


# -- criterion 6: face pipeline -------------------------------------------------------


def criterion_6_face_pipeline(workdir=None) -> tuple[bool, str]:
    script = [0, 1, 2, 1, 0, 1, 2, 2, 1, 0]
    frames = []
    for tick, n_faces in enumerate(script):
        cfg = SensorSimConfig(
            Modality.RGB_FRAME, "rgb0", 77, scenario=Scenario(face_counts=(n_faces,))
        )
        frames.append((tick, ColorImage(decode_image(generate_tick(cfg, tick)))))
    crops, _ = filter_single_face(frames, detect_faces)
    expected = [i for i, n in enumerate(script) if n == 1]
    ok_faces = [fid for fid, _, _ in crops] == expected

    p = 42 * HOUR_MS
    kept = filter_by_pain_window(
        [p - HOUR_MS - 1, p - HOUR_MS, p, p + HOUR_MS, p + HOUR_MS + 1], [p]
    )
    ok_window = kept == [p - HOUR_MS, p, p + HOUR_MS]
    return ok_faces and ok_window, f"crops={len(crops)} expected={len(expected)} window_ok={ok_window}"


# -- criterion 7: curation --------------------------------------------------------------


def criterion_7_curation(workdir=None) -> tuple[bool, str]:
    work = _tmpdir(workdir, "c7_curation")
    scrub = b"acceptance-scrub-key-0123456789"
    day = 86_400_000
    t0 = 1_750_000_000_000
    sess_a = PatientSession("PATIENT-ALPHA-001", pseudonymize("PATIENT-ALPHA-001", scrub),
                            "R1", "c1", t0, t0 + 3 * day)
    sess_b = PatientSession("PATIENT-BRAVO-002", pseudonymize("PATIENT-BRAVO-002", scrub),
                            "R1", "c1", t0 + 3 * day, t0 + 7 * day)
    sessions = SessionMap([sess_a, sess_b])
    store = RecordStore(work)
    key = bytes(range(32))
    pipe = IngestPipeline(store, sessions, {"k1": key})

    rng = random.Random(7)
    stamps = [t0 + rng.randrange(7 * day) for _ in range(400)]
    stamps += [t0, t0 + 3 * day - 1, t0 + 3 * day, t0 + 7 * day - 1]  # exact boundaries
    outside = [t0 - 1, t0 + 7 * day]
    for seq, ts in enumerate(stamps + outside, start=1):
        payload, digest, cipher = seal_payload(
            b"sample-%d" % seq, "zlib", key, "k1", deterministic_nonce(0, seq)
        )
        from .core.types import RecordEnvelope

        env = RecordEnvelope(
            key=RecordKey("c1", "n0", seq), capture_ts=ts, room_id="R1",
            modality=Modality.NOISE, codec_id="zlib", cipher=cipher,
            payload=payload, payload_hash=digest,
        )
        pipe.ingest_bytes(encode_envelope(env))
    store.close()

    keys_a = set(store.manifest_keys(sess_a.study_id))
    keys_b = set(store.manifest_keys(sess_b.study_id))
    ok_partition = (
        len(keys_a) + len(keys_b) == len(stamps)
        and not (keys_a & keys_b)
    )
    rows_a = store.manifest_rows(sess_a.study_id)
    rows_b = store.manifest_rows(sess_b.study_id)
    ok_bounds = (
        all(t0 <= r["capture_ts"] < t0 + 3 * day for r in rows_a)
        and all(t0 + 3 * day <= r["capture_ts"] < t0 + 7 * day for r in rows_b)
    )
    quarantined = (work / "quarantine" / "manifest.jsonl").read_text().count("\n")
    ok_quarantine = quarantined == len(outside)

    leaks = []
    for path in work.rglob("*"):
        if path.is_file():
            blob = path.read_bytes()
            if b"PATIENT-ALPHA-001" in blob or b"PATIENT-BRAVO-002" in blob:
                leaks.append(str(path))
    ok = ok_partition and ok_bounds and ok_quarantine and not leaks
    return ok, (
        f"partitioned={len(keys_a)}+{len(keys_b)}/{len(stamps)} bounds_ok={ok_bounds} "
        f"quarantined={quarantined} patient_id_leaks={len(leaks)}"
    )


# -- criterion 8: active-learning properties ----------------------------------------------


def criterion_8_al_properties(workdir=None) -> tuple[bool, str]:
    rng = random.Random(88_000)
    failures = []
    for case in range(1000):
        n_ann = rng.randint(1, 5)
        anns = [
            AuAnnotation(f"a{k}", "item",
                         frozenset(l for l in AU_LABELS if rng.random() < 0.35), 0, 1)
            for k in range(n_ann)
        ]
        weights = {f"a{k}": rng.uniform(0.05, 1.0) for k in range(n_ann)}
        preds = [
            ModelPrediction(f"m{j}", "item", {l: rng.random() for l in AU_LABELS})
            for j in range(rng.randint(1, 3))
        ]
        mw = ensemble_weights([rng.uniform(0, 0.9) for _ in preds])
        cons = consensus(anns, weights, preds[0])
        score = al_score_labeled("item", cons, preds, mw)

        if not all(0.0 <= p <= 1.0 for p in score.per_class.values()):
            failures.append((case, "priority out of range"))
            continue

        target = AU_LABELS[case % len(AU_LABELS)]
        before = cons[target]
        agreeing = AuAnnotation(
            "extra", "item", frozenset({target}) if before.label == 1 else frozenset(), 0, 1
        )
        w2 = dict(weights, extra=rng.uniform(0.05, 1.0))
        cons2 = consensus([*anns, agreeing], w2, preds[0])
        score2 = al_score_labeled("item", cons2, preds, mw)
        if cons2[target].quality < before.quality - 1e-12:
            failures.append((case, "agreeing lowered quality"))
        if score2.per_class[target] > score.per_class[target] + 1e-12:
            failures.append((case, "agreeing raised priority"))

        conflicting = AuAnnotation(
            "conflict", "item",
            frozenset() if cons2[target].label == 1 else frozenset({target}), 0, 1,
        )
        w3 = dict(w2, conflict=rng.uniform(0.05, 1.0))
        cons3 = consensus([*anns, agreeing, conflicting], w3, preds[0])
        if cons3[target].label == cons2[target].label:
            if cons3[target].quality > cons2[target].quality + 1e-12:
                failures.append((case, "conflicting raised quality"))

        # consensus argmax invariant under uniform weight scaling
        scale = rng.choice([0.3, 2.0, 9.0])
        cons_scaled = consensus(
            anns, {k: v * scale for k, v in weights.items()}, preds[0],
            model_weight=0.5 * scale,
        )
        if any(cons_scaled[l].label != cons[l].label for l in AU_LABELS):
            failures.append((case, "argmax not scale invariant"))

        # unlabeled priority maximal iff ensemble probability is one half
        up = al_score_unlabeled("item", preds, mw)
        for label in AU_LABELS:
            p_bar = sum(w * p.au_probs[label] for w, p in zip(mw, preds))
            maximal = up.per_class[label] >= 1.0 - 1e-12
            if maximal != (abs(p_bar - 0.5) <= 1e-12):
                failures.append((case, f"unlabeled maximality mismatch at {label}"))
                break
    half = ModelPrediction("m", "i", {l: 0.5 for l in AU_LABELS})
    if al_score_unlabeled("i", [half], [1.0]).item_priority != 1.0:
        failures.append((-1, "half probability not maximal"))
    return not failures, f"cases=1000 failures={failures[:3]}"


# -- criterion 9: box analytics ---------------------------------------------------------


def criterion_9_boxes(workdir=None) -> tuple[bool, str]:
    hand = iou((0, 0, 10, 10), (5, 5, 10, 10))
    ok_iou = abs(hand - 1 / 7) <= 1e-9

    unanimous = [
        BoxAnnotation(a, "item", (Box(10, 10, 20, 30, "sitting"),), 0, 1)
        for a in ("a", "b", "c")
    ]
    uclusters, uscore = cluster_boxes(unanimous, {"a": 0.6, "b": 0.9, "c": 0.3})
    ok_unanimous = len(uclusters) == 1 and uscore.item_priority == 0.0

    rng = random.Random(909)
    labels = ["sitting", "standing", "assisted_walker"]
    anns = []
    for k in range(5):
        boxes = tuple(
            Box(rng.uniform(0, 70), rng.uniform(0, 50), rng.uniform(5, 25),
                rng.uniform(5, 25), rng.choice(labels))
            for _ in range(rng.randint(0, 4))
        )
        anns.append(BoxAnnotation(f"a{k}", "item", boxes, 0, 1))
    weights = {f"a{k}": rng.uniform(0.1, 1.0) for k in range(5)}
    ref_clusters, ref_score = cluster_boxes(anns, weights)
    ref = [(c.label, c.rep, sorted(a for a, _ in c.members)) for c in ref_clusters]
    ok_det = True
    for _ in range(100):
        shuffled = anns[:]
        rng.shuffle(shuffled)
        clusters, score = cluster_boxes(shuffled, weights)
        got = [(c.label, c.rep, sorted(a for a, _ in c.members)) for c in clusters]
        if got != ref or abs(score.item_priority - ref_score.item_priority) > 1e-12:
            ok_det = False
            break
    return ok_iou and ok_unanimous and ok_det, (
        f"iou={hand:.12f} unanimous_priority={uscore.item_priority} "
        f"shuffle_deterministic={ok_det}"
    )


# -- criterion 10: metrics ---------------------------------------------------------------


def criterion_10_metrics(workdir=None) -> tuple[bool, str]:
    day0 = 1_750_000_000_000 // 86_400_000 * 86_400_000
    ten_am = day0 + 10 * HOUR_MS
    two_am = day0 + 2 * HOUR_MS

    visits = visitation([(ten_am + i * 1000, 2) for i in range(300)])
    ok_visit = visits == (1, 0)
    merged = visitation(
        [(ten_am + i * 1000, 2) for i in range(40)]
        + [(ten_am + i * 1000, 1) for i in range(40, 70)]
        + [(ten_am + i * 1000, 2) for i in range(70, 110)]
    )
    ok_merge = merged == (1, 0)

    light = [(two_am + i * 1000, 150.0 if i < 120 else 5.0) for i in range(600)]
    ok_disrupt = sum(nightly_disruptions([], light).values()) == 1
    ok_day_spike = nightly_disruptions([], [(ten_am + i * 1000, 500.0) for i in range(120)]) == {}

    rng = random.Random(1010)
    base = 1_749_999_999_000
    noise = [(base + rng.randrange(0, 4 * HOUR_MS), rng.uniform(30, 90)) for _ in range(600)]
    light_series = [(base + rng.randrange(0, 4 * HOUR_MS), rng.uniform(0, 300)) for _ in range(500)]
    windows = env_stats(noise, light_series)
    ok_env = True
    for w in windows:
        nv = [v for ts, v in noise if w.window_start <= ts < w.window_end]
        lv = [v for ts, v in light_series if w.window_start <= ts < w.window_end]
        if w.sample_count != len(nv) + len(lv):
            ok_env = False
        if nv and (abs(w.noise_mean - sum(nv) / len(nv)) > 1e-9 or w.noise_max != max(nv)):
            ok_env = False
        if lv and (abs(w.light_mean - sum(lv) / len(lv)) > 1e-9 or w.light_max != max(lv)):
            ok_env = False
    if sum(w.sample_count for w in windows) != len(noise) + len(light_series):
        ok_env = False

    # rerun determinism over a real stored partition
    from .batch import compute_study_metrics
    from .ingest.sessions import ClinicalFeed
    import json as _json

    work = _tmpdir(workdir, "c10_metrics")
    specs = default_cart_specs(1, frame_w=40, frame_h=30)
    run = SimRun(work, specs, duration_s=40)
    run.run()
    run.close()
    feed_path = work / "feed.jsonl"
    feed_lines = [
        {"type": "session", "patient_id": "patient-c1", "room_id": "R001", "cart_id": "c1",
         "admission_ts": run.start_ms - HOUR_MS,
         "discharge_ts": run.start_ms + 10 * HOUR_MS},
        {"type": "vitals", "room_id": "R001", "ts": run.start_ms + 1000, "heart_rate": 88,
         "resp_rate": 18, "spo2": 96, "sbp": 118, "temp_c": 37.4},
        {"type": "pain", "room_id": "R001", "ts": run.start_ms + 5000, "score": 4},
    ]
    feed_path.write_text("\n".join(_json.dumps(x) for x in feed_lines))
    scrub = bytes(range(32))
    feed = ClinicalFeed.load(feed_path, scrub)
    # metric series are keyed by the sim's fixed study id
    study = "study-c1"
    sessions = [PatientSession("patient-c1", study, "R001", "c1",
                               run.start_ms - HOUR_MS, run.start_ms + 10 * HOUR_MS)]
    feed.sessions = SessionMap(sessions)
    store = RecordStore(work / "server")
    keys = {s.key_id: s.key for s in specs}
    digests = []
    for attempt in ("one", "two"):
        out = work / f"metrics_{attempt}"
        compute_study_metrics(store, study, keys, feed, out)
        digests.append(hashlib.sha256((out / f"{study}.jsonl").read_bytes()).hexdigest())
    ok_rerun = digests[0] == digests[1]

    ok = ok_visit and ok_merge and ok_disrupt and ok_day_spike and ok_env and ok_rerun
    return ok, (
        f"visit={visits} merged={merged} disruptions_ok={ok_disrupt} "
        f"env_oracle_ok={ok_env} rerun_identical={ok_rerun}"
    )


CRITERIA = {
    1: ("zero-loss delivery under faults", criterion_1_zero_loss),
    2: ("bounded outbox backlog", criterion_2_bounded_backlog),
    3: ("Fleiss kappa exact and Monte Carlo", criterion_3_fleiss_kappa),
    4: ("expected calibration error", criterion_4_ece),
    5: ("SSIM closed form and dedup", criterion_5_ssim),
    6: ("face pipeline and pain window", criterion_6_face_pipeline),
    7: ("curation slicing and PHI scrub", criterion_7_curation),
    8: ("active-learning properties", criterion_8_al_properties),
    9: ("box IoU and clustering", criterion_9_boxes),
    10: ("metrics rules and determinism", criterion_10_metrics),
}


def run_criteria(numbers=None, workdir=None, echo=print) -> bool:
    numbers = sorted(numbers or CRITERIA)
    all_ok = True
    for n in numbers:
        title, fn = CRITERIA[n]
        t0 = time.monotonic()
        try:
            ok, detail = fn(workdir)
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"exception: {type(exc).__name__}: {exc}"
        elapsed = time.monotonic() - t0
        all_ok &= ok
        echo(f"{'PASS' if ok else 'FAIL'} criterion {n}: {title} ({elapsed:.1f}s) -- {detail}")
    return all_ok
