"""Batch commands over the storage layout: annotation-candidate pipelines,
per-study metrics, mock-model predictions and analytics reports.

Outputs are deterministic given identical storage and config: JSONL rows
are written in sorted order with sorted keys, and the run manifest records
a digest over them so reruns can be compared byte-for-byte.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import (
    ActiveLearningScore,
    AnnotationStore,
    ModelPrediction,
    TASK_DEPTH,
    TASK_FACE,
    al_score_labeled,
    al_score_unlabeled,
    annotator_quality,
    cluster_boxes,
    consensus,
    ensemble_weights,
    expected_calibration_error,
    weekly_summary,
)
from .core.codec import decode_envelope
from .core.payloads import decode_depth, decode_image, decode_series
from .core.types import Modality
from .core.vocab import AU_LABELS
from .edge.sealing import unseal_payload
from .ingest.sessions import ClinicalFeed
from .ingest.storage import RecordStore
from .metrics import (
    ACUITY_STUB_PLUGIN,
    DELIRIUM_STUB_PLUGIN,
    MOCK_AU_PLUGIN,
    MOCK_POSTURE_PLUGIN,
    MetricPoint,
    env_stats,
    nightly_disruptions,
    person_count_series,
    run_au_inference,
    score_series,
    visitation,
    write_metric_points,
)
from .vision import (
    ColorImage,
    DepthFrame,
    dedup_successive,
    depth_to_colormap,
    detect_faces,
    extract_frames,
    filter_by_pain_window,
    filter_person_frames,
    filter_single_face,
)

DAY_MS = 86_400_000


def _png_bytes(pixels: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return buf.getvalue()


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def outputs_digest(paths: list[Path]) -> str:
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def write_run_manifest(out_dir: Path, command: str, config_digest: str,
                       data_paths: list[Path], started_ts: int, finished_ts: int,
                       seed: int = 0) -> dict:
    import platform

    manifest = {
        "run_id": hashlib.sha256(
            f"{command}:{config_digest}:{outputs_digest(data_paths)}".encode()
        ).hexdigest()[:12],
        "command": command,
        "config_digest": config_digest,
        "seed": seed,
        "started_ts": started_ts,
        "finished_ts": finished_ts,
        "outputs_digest": outputs_digest(data_paths),
        "versions": {
            "bedwatch": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def _load_study_records(store: RecordStore, study_id: str, keys: dict[str, bytes],
                        modality: Modality) -> list[tuple[dict, bytes]]:
    """(manifest row, plaintext payload) for one modality, capture order."""
    rows = [r for r in store.manifest_rows(study_id) if r["modality"] == modality.value]
    rows.sort(key=lambda r: (r["capture_ts"], r["cart_id"], r["sensor_id"], r["seq"]))
    out = []
    for row in rows:
        env = decode_envelope(store.read_record(row["path"]))
        key = keys.get(env.cipher.key_id)
        if key is None:
            continue
        out.append((row, unseal_payload(env, key)))
    return out


# -- face pipeline ---------------------------------------------------------------


@dataclass
class PipelineRunStats:
    examined: int = 0
    after_pain_filter: int = 0
    after_extraction: int = 0
    candidates: int = 0


def run_face_pipeline(store: RecordStore, study_id: str, keys: dict[str, bytes],
                      pain_ts: list[int], out_dir: str | Path,
                      fps: float = 1.0, window_ms: int = 3_600_000) -> PipelineRunStats:
    """Pain-window filter, frame extraction, single-face crop; writes crops
    plus a manifest into out_dir/<study>/face/."""
    out = Path(out_dir) / study_id / "face"
    out.mkdir(parents=True, exist_ok=True)
    records = _load_study_records(store, study_id, keys, Modality.RGB_FRAME)
    stats = PipelineRunStats(examined=len(records))

    kept_ts = set(filter_by_pain_window([r["capture_ts"] for r, _ in records], pain_ts, window_ms))
    records = [(r, p) for r, p in records if r["capture_ts"] in kept_ts]
    stats.after_pain_filter = len(records)

    chosen = set(extract_frames([r["capture_ts"] for r, _ in records], fps))
    # bucket-first: keep the first record at each chosen timestamp
    seen_ts = set()
    sampled = []
    for row, payload in records:
        ts = row["capture_ts"]
        if ts in chosen and ts not in seen_ts:
            seen_ts.add(ts)
            sampled.append((row, payload))
    stats.after_extraction = len(sampled)

    frames = [(row["path"], ColorImage(decode_image(payload))) for row, payload in sampled]
    by_path = {row["path"]: row for row, _ in sampled}
    crops, _ = filter_single_face(frames, detect_faces)

    manifest_rows = []
    for path_id, crop, det in crops:
        row = by_path[path_id]
        item_id = f"{study_id}_face_{row['cart_id']}_{row['sensor_id']}_{row['seq']}"
        (out / f"{item_id}.png").write_bytes(_png_bytes(crop.pixels))
        manifest_rows.append({
            "item_id": item_id,
            "task": TASK_FACE,
            "study_id": study_id,
            "source": {"cart_id": row["cart_id"], "sensor_id": row["sensor_id"],
                        "seq": row["seq"]},
            "capture_ts": row["capture_ts"],
            "pipeline": "face",
            "crop_bbox": {"x": det.x, "y": det.y, "w": det.w, "h": det.h},
        })
    _write_jsonl(out / "manifest.jsonl", manifest_rows)
    stats.candidates = len(manifest_rows)
    return stats


# -- depth pipeline ---------------------------------------------------------------


def run_depth_pipeline(store: RecordStore, study_id: str, keys: dict[str, bytes],
                       out_dir: str | Path, dedup_threshold: float = 0.95) -> PipelineRunStats:
    """Colormap render, person filter, similarity dedup; writes colormaps
    plus a manifest into out_dir/<study>/depth/."""
    out = Path(out_dir) / study_id / "depth"
    out.mkdir(parents=True, exist_ok=True)
    records = _load_study_records(store, study_id, keys, Modality.DEPTH_FRAME)
    stats = PipelineRunStats(examined=len(records))

    frames = [(row["path"], DepthFrame(decode_depth(payload))) for row, payload in records]
    by_path = {row["path"]: (row, payload) for row, payload in records}
    from .vision import detect_persons

    with_persons, _ = filter_person_frames(frames, detect_persons)
    stats.after_pain_filter = stats.examined
    stats.after_extraction = len(with_persons)

    colormaps = [(pid, depth_to_colormap(frame), dets) for pid, frame, dets in with_persons]
    kept_ids = set(dedup_successive(
        [(pid, cm.to_gray()) for pid, cm, _ in colormaps], dedup_threshold
    ))

    manifest_rows = []
    for pid, cm, dets in colormaps:
        if pid not in kept_ids:
            continue
        row, _ = by_path[pid]
        item_id = f"{study_id}_depth_{row['cart_id']}_{row['sensor_id']}_{row['seq']}"
        (out / f"{item_id}.png").write_bytes(_png_bytes(cm.pixels))
        manifest_rows.append({
            "item_id": item_id,
            "task": TASK_DEPTH,
            "study_id": study_id,
            "source": {"cart_id": row["cart_id"], "sensor_id": row["sensor_id"],
                        "seq": row["seq"]},
            "capture_ts": row["capture_ts"],
            "pipeline": "depth",
            "detections": [
                {"x": d.x, "y": d.y, "w": d.w, "h": d.h, "label": d.label} for d in dets
            ],
        })
    _write_jsonl(out / "manifest.jsonl", manifest_rows)
    stats.candidates = len(manifest_rows)
    return stats


def load_candidates(candidates_dir: str | Path, task: str, study_id: str | None = None) -> list[dict]:
    root = Path(candidates_dir)
    rows = []
    pattern = f"{study_id}/{task}/manifest.jsonl" if study_id else f"*/{task}/manifest.jsonl"
    for manifest in sorted(root.glob(pattern)):
        for line in manifest.read_text().splitlines():
            if line.strip():
                rows.append(json.loads(line))
    return rows


# -- metrics ----------------------------------------------------------------------


def compute_study_metrics(store: RecordStore, study_id: str, keys: dict[str, bytes],
                          feed: ClinicalFeed, out_dir: str | Path) -> list[MetricPoint]:
    """All dashboard metric series for one study, written as JSONL."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points: list[MetricPoint] = []

    def series_of(modality: Modality) -> list[tuple[int, float]]:
        records = _load_study_records(store, study_id, keys, modality)
        series = []
        for row, payload in records:
            samples, _ = decode_series(payload)
            series.append((row["capture_ts"], float(samples[0, 0])))
        return series

    noise = series_of(Modality.NOISE)
    light = series_of(Modality.LIGHT)
    for w in env_stats(noise, light):
        if w.noise_mean is not None:
            points.append(MetricPoint(study_id, "noise", w.window_start, w.noise_mean))
        if w.light_mean is not None:
            points.append(MetricPoint(study_id, "light", w.window_start, w.light_mean))
    for night_start, count in nightly_disruptions(noise, light).items():
        points.append(MetricPoint(study_id, "disruptions", night_start, float(count)))

    depth_records = _load_study_records(store, study_id, keys, Modality.DEPTH_FRAME)
    depth_frames = [
        (row["capture_ts"], DepthFrame(decode_depth(payload))) for row, payload in depth_records
    ]
    counts = person_count_series(depth_frames, MOCK_POSTURE_PLUGIN)
    if counts:
        by_day: dict[int, list[tuple[int, int | None]]] = {}
        for ts, c in counts:
            by_day.setdefault(ts // DAY_MS * DAY_MS, []).append((ts, c))
        for day_start, day_counts in sorted(by_day.items()):
            day_v, night_v = visitation(day_counts)
            points.append(MetricPoint(study_id, "visitation_day", day_start, float(day_v)))
            points.append(MetricPoint(study_id, "visitation_night", day_start, float(night_v)))
        by_hour: dict[int, list[int]] = {}
        for ts, c in counts:
            if c is not None:
                by_hour.setdefault(ts // 3_600_000 * 3_600_000, []).append(c)
        for hour, cs in sorted(by_hour.items()):
            points.append(MetricPoint(study_id, "mobility", hour, sum(cs) / len(cs)))

    sessions = feed.sessions.for_study(study_id)
    for session in sessions:
        points.extend(score_series(study_id, "acuity", ACUITY_STUB_PLUGIN, feed.vitals, session))
        points.extend(
            score_series(study_id, "delirium_risk", DELIRIUM_STUB_PLUGIN, feed.vitals, session)
        )
        for pain in feed.pain_events:
            ts = int(pain["ts"])
            if pain.get("room_id") == session.room_id and session.covers(ts):
                value = min(1.0, max(0.0, float(pain.get("score", 0)) / 10.0))
                points.append(MetricPoint(study_id, "pain", ts, value))

    points.sort(key=lambda p: (p.metric, p.ts))
    write_metric_points(out / f"{study_id}.jsonl", points)
    return points


# -- model predictions ---------------------------------------------------------------


def predict_face_items(candidates_dir: str | Path, study_id: str | None = None) -> list[dict]:
    """Run the mock AU model over face candidates; returns prediction rows."""
    rows = []
    for item in load_candidates(candidates_dir, TASK_FACE, study_id):
        png = Path(candidates_dir) / item["study_id"] / TASK_FACE / f"{item['item_id']}.png"
        from PIL import Image

        pixels = np.asarray(Image.open(png).convert("RGB"))
        probs = run_au_inference(ColorImage(pixels), MOCK_AU_PLUGIN)
        rows.append({
            "model_id": MOCK_AU_PLUGIN.name,
            "item_id": item["item_id"],
            "au_probs": {k: probs[k] for k in sorted(probs)},
        })
    return rows


def load_predictions(path: str | Path) -> list[ModelPrediction]:
    preds = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            d = json.loads(line)
            preds.append(ModelPrediction(d["model_id"], d["item_id"], d.get("au_probs", {})))
    return preds


# -- active-learning queue ---------------------------------------------------------------


def build_al_queue(annotation_store: AnnotationStore, predictions: list[ModelPrediction],
                   candidates_dir: str | Path, alpha: float = 0.5, beta: float = 0.5,
                   model_weight: float = 0.5, iou_thr: float = 0.5) -> list[dict]:
    """Ranked annotation queue across face and depth items."""
    face_anns = [a for a in annotation_store.load(TASK_FACE) if not a.skipped]
    depth_anns = [a for a in annotation_store.load(TASK_DEPTH) if not a.skipped]
    by_model: dict[str, dict[str, ModelPrediction]] = {}
    for p in predictions:
        by_model.setdefault(p.model_id, {})[p.item_id] = p
    model_ids = sorted(by_model)

    anns_by_item: dict[str, list] = {}
    for a in face_anns:
        anns_by_item.setdefault(a.item_id, []).append(a)

    # annotator weights from model confidence + peer agreement
    primary = by_model[model_ids[0]] if model_ids else {}
    model_probs = {
        (item_id, au): pred.au_probs[au]
        for item_id, pred in primary.items()
        for au in pred.au_probs
    }
    weights = {a: q.weight for a, q in annotator_quality(face_anns, model_probs, alpha).items()}

    # per-model calibration against consensus labels, then ensemble weights
    consensus_by_item = {}
    for item_id, group in anns_by_item.items():
        model_pred = primary.get(item_id)
        voters = {a.annotator_id: weights.get(a.annotator_id, 0.0) for a in group}
        if not any(v > 0 for v in voters.values()):
            voters = {a.annotator_id: 1.0 for a in group}
        consensus_by_item[item_id] = consensus(group, voters, model_pred, model_weight)
    eces = []
    for model_id in model_ids:
        pairs = []
        for item_id, cons in consensus_by_item.items():
            pred = by_model[model_id].get(item_id)
            if pred is None:
                continue
            for au in AU_LABELS:
                if au not in pred.au_probs:
                    continue
                p = pred.au_probs[au]
                predicted = 1 if p >= 0.5 else 0
                conf = p if predicted == 1 else 1.0 - p
                pairs.append((conf, 1 if predicted == cons[au].label else 0))
        eces.append(expected_calibration_error(pairs) if pairs else 1.0)
    ens_weights = ensemble_weights(eces) if model_ids else []

    queue: list[dict] = []
    face_items = {c["item_id"] for c in load_candidates(candidates_dir, TASK_FACE)}
    for item_id in sorted(face_items):
        preds = [by_model[m][item_id] for m in model_ids if item_id in by_model[m]]
        mw = ens_weights[: len(preds)]
        if item_id in consensus_by_item:
            score = al_score_labeled(item_id, consensus_by_item[item_id], preds, mw, beta)
            status = "labeled"
        else:
            score = al_score_unlabeled(item_id, preds, mw)
            status = "unlabeled"
        queue.append({
            "item_id": item_id, "task": TASK_FACE, "status": status,
            "priority": score.item_priority,
            "per_class": {k: score.per_class[k] for k in sorted(score.per_class)},
        })

    depth_by_item: dict[str, list] = {}
    for a in depth_anns:
        depth_by_item.setdefault(a.item_id, []).append(a)
    depth_items = {c["item_id"] for c in load_candidates(candidates_dir, TASK_DEPTH)}
    for item_id in sorted(depth_items):
        group = depth_by_item.get(item_id)
        if group:
            voters = {a.annotator_id: weights.get(a.annotator_id, 1.0) for a in group}
            clusters, score = cluster_boxes(group, voters, iou_thr)
            queue.append({
                "item_id": item_id, "task": TASK_DEPTH, "status": "labeled",
                "priority": score.item_priority,
                "per_class": {k: score.per_class[k] for k in sorted(score.per_class)},
            })
        else:
            queue.append({
                "item_id": item_id, "task": TASK_DEPTH, "status": "unlabeled",
                "priority": 1.0, "per_class": {},
            })

    queue.sort(key=lambda r: (-r["priority"], r["item_id"]))
    return queue


# -- report rendering ---------------------------------------------------------------


def render_weekly_report(store: AnnotationStore, week_of: str, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = weekly_summary(store, week_of)
    doc = summary.to_dict()
    _write_jsonl(out / "weekly_summary.jsonl", [doc])
    (out / "weekly_summary.txt").write_text(format_weekly_table(doc))
    render_weekly_figure(doc, out / "weekly_summary.png")
    return doc


def format_weekly_table(doc: dict) -> str:
    lines = [
        f"Weekly annotation summary  [{doc['week_start']} .. {doc['week_end']})",
        "",
        f"{'annotator':<16}{'count':>8}{'hours':>10}{'median s':>10}{'skipped':>9}",
    ]
    for name, s in doc["annotators"].items():
        med = "-" if s["median_seconds"] is None else f"{s['median_seconds']:.1f}"
        lines.append(
            f"{name:<16}{s['count']:>8}{s['active_hours']:>10.4f}{med:>10}{s['skipped']:>9}"
        )
    lines.append("")
    lines.append(f"{'label':<22}{'kappa':>8}{'items':>7}{'raters':>8}")
    for label, k in doc["kappa_by_label"].items():
        kv = "-" if k["kappa"] is None else f"{k['kappa']:.4f}"
        lines.append(f"{label:<22}{kv:>8}{k['n_items']:>7}{k['n_raters']:>8}")
    return "\n".join(lines) + "\n"


def format_queue_table(queue: list[dict], limit: int = 25) -> str:
    lines = [f"{'rank':<6}{'priority':>9}  {'status':<10}{'task':<7}item_id"]
    for i, row in enumerate(queue[:limit], 1):
        lines.append(
            f"{i:<6}{row['priority']:>9.4f}  {row['status']:<10}{row['task']:<7}{row['item_id']}"
        )
    return "\n".join(lines) + "\n"


def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_weekly_figure(doc: dict, path: Path) -> None:
    plt = _mpl()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    names = list(doc["annotators"])
    counts = [doc["annotators"][n]["count"] for n in names]
    ax1.bar(names, counts, color="#4878a8")
    ax1.set_title("annotations completed")
    ax1.tick_params(axis="x", rotation=45)
    labels = [l for l, k in doc["kappa_by_label"].items() if k["kappa"] is not None]
    kappas = [doc["kappa_by_label"][l]["kappa"] for l in labels]
    ax2.barh(labels, kappas, color="#70ad70")
    ax2.set_xlim(-1, 1)
    ax2.axvline(0, color="k", lw=0.5)
    ax2.set_title("per-label agreement (kappa)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_queue_figure(queue: list[dict], path: Path) -> None:
    plt = _mpl()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
    priorities = [r["priority"] for r in queue]
    ax1.hist(priorities, bins=20, range=(0, 1), color="#a85f48")
    ax1.set_title("priority distribution")
    ax1.set_xlabel("priority")
    top = queue[:15]
    ax2.barh([r["item_id"][-28:] for r in reversed(top)],
             [r["priority"] for r in reversed(top)], color="#8458a8")
    ax2.set_xlim(0, 1)
    ax2.set_title("top of the annotation queue")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_metrics_figures(points: list[MetricPoint], out_dir: Path) -> list[Path]:
    plt = _mpl()
    out_dir.mkdir(parents=True, exist_ok=True)
    by_metric: dict[str, list[MetricPoint]] = {}
    for p in points:
        by_metric.setdefault(p.metric, []).append(p)
    written = []

    def hours(ps):
        t0 = min(p.ts for p in ps)
        return [(p.ts - t0) / 3_600_000 for p in ps]

    env = [m for m in ("noise", "light") if m in by_metric]
    if env:
        fig, ax = plt.subplots(figsize=(9, 3.5))
        for m, color in zip(env, ("#4878a8", "#c8a832")):
            ps = by_metric[m]
            ax.plot(hours(ps), [p.value for p in ps], label=m, color=color)
        ax.set_xlabel("hours")
        ax.legend()
        ax.set_title("hourly environment levels")
        fig.tight_layout()
        fig.savefig(out_dir / "environment.png", dpi=110)
        plt.close(fig)
        written.append(out_dir / "environment.png")

    scores = [m for m in ("acuity", "delirium_risk", "pain", "mobility") if m in by_metric]
    if scores:
        fig, ax = plt.subplots(figsize=(9, 3.5))
        for m in scores:
            ps = by_metric[m]
            ax.plot(hours(ps), [p.value for p in ps], label=m, marker=".", ms=3)
        ax.set_xlabel("hours")
        ax.legend()
        ax.set_title("clinical score series")
        fig.tight_layout()
        fig.savefig(out_dir / "scores.png", dpi=110)
        plt.close(fig)
        written.append(out_dir / "scores.png")

    bars = [m for m in ("visitation_day", "visitation_night", "disruptions") if m in by_metric]
    if bars:
        fig, ax = plt.subplots(figsize=(9, 3.5))
        width = 0.28
        for k, m in enumerate(bars):
            ps = by_metric[m]
            xs = [i + k * width for i in range(len(ps))]
            ax.bar(xs, [p.value for p in ps], width=width, label=m)
        ax.set_xlabel("day / night index")
        ax.legend()
        ax.set_title("visits and disruptions")
        fig.tight_layout()
        fig.savefig(out_dir / "visits_disruptions.png", dpi=110)
        plt.close(fig)
        written.append(out_dir / "visits_disruptions.png")
    return written
