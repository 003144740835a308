"""Batch pipelines over a real stored partition: candidate production,
rerun determinism, predictions and the ranked queue."""

import hashlib
import json

import pytest

from bedwatch.analytics import AnnotationStore, AuAnnotation
from bedwatch.batch import (
    build_al_queue,
    compute_study_metrics,
    load_candidates,
    load_predictions,
    predict_face_items,
    render_metrics_figures,
    render_queue_figure,
    render_weekly_report,
    run_depth_pipeline,
    run_face_pipeline,
)
from bedwatch.ingest.storage import RecordStore
from bedwatch.simrun import SimRun, default_cart_specs

STUDY = "study-c1"


@pytest.fixture(scope="module")
def stored_run(tmp_path_factory):
    work = tmp_path_factory.mktemp("batchrun")
    specs = default_cart_specs(1, frame_w=48, frame_h=36)
    run = SimRun(work, specs, duration_s=45)
    res = run.run()
    run.close()
    assert res.zero_loss
    return work, specs, run.start_ms


def digest_tree(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != "run_manifest.json":
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestFacePipeline:
    def test_candidates_produced_and_rerun_identical(self, stored_run, tmp_path):
        work, specs, start_ms = stored_run
        store = RecordStore(work / "server")
        keys = {s.key_id: s.key for s in specs}
        pain = [start_ms + 10_000]
        digests = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            stats = run_face_pipeline(store, STUDY, keys, pain, out)
            assert stats.candidates > 0
            digests.append(digest_tree(out))
        assert digests[0] == digests[1]

    def test_no_pain_events_no_candidates(self, stored_run, tmp_path):
        work, specs, _ = stored_run
        store = RecordStore(work / "server")
        keys = {s.key_id: s.key for s in specs}
        stats = run_face_pipeline(store, STUDY, keys, [], tmp_path / "none")
        assert stats.candidates == 0 and stats.after_pain_filter == 0


class TestDepthPipeline:
    def test_person_filter_and_dedup_applied(self, stored_run, tmp_path):
        work, specs, _ = stored_run
        store = RecordStore(work / "server")
        keys = {s.key_id: s.key for s in specs}
        stats = run_depth_pipeline(store, STUDY, keys, tmp_path)
        # scenario cycles (0,1,1,2): a quarter of frames are empty rooms
        assert 0 < stats.candidates <= stats.after_extraction < stats.examined
        rows = load_candidates(tmp_path, "depth", STUDY)
        assert all(r["detections"] for r in rows)

    def test_rerun_identical(self, stored_run, tmp_path):
        work, specs, _ = stored_run
        store = RecordStore(work / "server")
        keys = {s.key_id: s.key for s in specs}
        digests = []
        for sub in ("a", "b"):
            run_depth_pipeline(store, STUDY, keys, tmp_path / sub)
            digests.append(digest_tree(tmp_path / sub))
        assert digests[0] == digests[1]


class TestPredictionsAndQueue:
    def test_predict_and_rank(self, stored_run, tmp_path):
        work, specs, start_ms = stored_run
        store = RecordStore(work / "server")
        keys = {s.key_id: s.key for s in specs}
        candidates = tmp_path / "cands"
        run_face_pipeline(store, STUDY, keys, [start_ms + 10_000], candidates)
        run_depth_pipeline(store, STUDY, keys, candidates)

        rows = predict_face_items(candidates, STUDY)
        assert rows and all(len(r["au_probs"]) == 12 for r in rows)
        pred_path = tmp_path / "preds.jsonl"
        pred_path.write_text("\n".join(json.dumps(r, sort_keys=True) for r in rows))
        predictions = load_predictions(pred_path)

        ann_store = AnnotationStore(tmp_path / "ann")
        face_items = [c["item_id"] for c in load_candidates(candidates, "face", STUDY)]
        for annotator in ("alice", "bob", "carol"):
            ann_store.append(
                AuAnnotation(annotator, face_items[0], frozenset({"AU43"}), 0, 5000)
            )
        queue = build_al_queue(ann_store, predictions, candidates)
        assert queue == sorted(queue, key=lambda r: (-r["priority"], r["item_id"]))
        statuses = {r["item_id"]: r["status"] for r in queue}
        assert statuses[face_items[0]] == "labeled"
        assert all(0.0 <= r["priority"] <= 1.0 for r in queue)
        # unanimous annotators agreeing with a confident model: low priority
        labeled_row = next(r for r in queue if r["item_id"] == face_items[0])
        unlabeled = [r for r in queue if r["task"] == "face" and r["status"] == "unlabeled"]
        assert unlabeled, "expected some unlabeled face items"
        render_queue_figure(queue, tmp_path / "queue.png")
        assert (tmp_path / "queue.png").stat().st_size > 0


class TestReports:
    def test_weekly_report_files(self, tmp_path):
        store = AnnotationStore(tmp_path / "ann")
        from bedwatch.analytics import week_bounds

        start, _ = week_bounds("2026-08-03")
        store.append(AuAnnotation("alice", "i1", frozenset({"AU4"}), start, start + 12_000))
        store.append(AuAnnotation("bob", "i1", frozenset(), start, start + 9_000))
        doc = render_weekly_report(store, "2026-08-03", tmp_path / "rep")
        assert (tmp_path / "rep" / "weekly_summary.jsonl").exists()
        assert (tmp_path / "rep" / "weekly_summary.txt").exists()
        assert (tmp_path / "rep" / "weekly_summary.png").stat().st_size > 0
        assert doc["annotators"]["alice"]["count"] == 1

    def test_metrics_figures_rendered(self, stored_run, tmp_path):
        work, specs, start_ms = stored_run
        store = RecordStore(work / "server")
        keys = {s.key_id: s.key for s in specs}
        from bedwatch.core.types import PatientSession
        from bedwatch.ingest.sessions import ClinicalFeed, SessionMap

        feed_path = tmp_path / "feed.jsonl"
        feed_path.write_text(json.dumps({
            "type": "vitals", "room_id": "R001", "ts": start_ms + 500,
            "heart_rate": 90, "resp_rate": 18, "spo2": 95, "sbp": 120, "temp_c": 37.8,
        }))
        feed = ClinicalFeed.load(feed_path, bytes(32))
        feed.sessions = SessionMap([
            PatientSession("p", STUDY, "R001", "c1", start_ms - 1000, start_ms + 7_200_000)
        ])
        points = compute_study_metrics(store, STUDY, keys, feed, tmp_path / "m")
        assert points
        figures = render_metrics_figures(points, tmp_path / "m" / "figs")
        assert figures and all(f.stat().st_size > 0 for f in figures)
