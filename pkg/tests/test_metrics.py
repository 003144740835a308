import math
import random

import numpy as np
import pytest

from bedwatch.core.payloads import decode_depth, decode_image
from bedwatch.core.types import Modality, PatientSession
from bedwatch.core.vocab import AU_LABELS
from bedwatch.edge.sim import Scenario, SensorSimConfig, generate_tick
from bedwatch.metrics import (
    ACUITY_STUB_PLUGIN,
    ACUITY_WEIGHTS,
    MOCK_AU_PLUGIN,
    MOCK_POSTURE_PLUGIN,
    MetricPoint,
    MetricsError,
    PluginError,
    env_stats,
    logistic_score,
    nightly_disruptions,
    person_count_series,
    run_au_inference,
    score_series,
    visitation,
)
from bedwatch.vision import ColorImage, DepthFrame, detect_faces, filter_single_face

HOUR = 3_600_000


def face_crop(au_labels=(), seed=21):
    cfg = SensorSimConfig(
        modality=Modality.RGB_FRAME, sensor_id="rgb0", seed=seed,
        scenario=Scenario(face_counts=(1,), au_cycle=(tuple(au_labels),)),
    )
    img = ColorImage(decode_image(generate_tick(cfg, 0)))
    crops, _ = filter_single_face([(0, img)], detect_faces)
    assert crops, "fixture must contain exactly one face"
    return crops[0][1]


class TestAuInference:
    def test_eyes_closed_fixture(self):
        crop = face_crop(au_labels=("AU43",))
        probs = run_au_inference(crop, MOCK_AU_PLUGIN)
        assert probs["AU43"] == 1.0
        assert all(p == 0.0 for label, p in probs.items() if label != "AU43")

    def test_exactly_twelve_keys(self):
        probs = run_au_inference(face_crop(), MOCK_AU_PLUGIN)
        assert set(probs) == set(AU_LABELS) and len(probs) == 12

    def test_deterministic(self):
        crop = face_crop(au_labels=("AU4", "AU12"))
        assert run_au_inference(crop, MOCK_AU_PLUGIN) == run_au_inference(crop, MOCK_AU_PLUGIN)

    def test_multiple_active_aus(self):
        probs = run_au_inference(face_crop(au_labels=("AU4", "AU12", "AU26")), MOCK_AU_PLUGIN)
        active = {label for label, p in probs.items() if p == 1.0}
        assert active == {"AU4", "AU12", "AU26"}

    def test_wrong_plugin_kind(self):
        with pytest.raises(PluginError):
            run_au_inference(face_crop(), MOCK_POSTURE_PLUGIN)


class TestPersonCounts:
    def depth(self, n, tick=0):
        cfg = SensorSimConfig(
            modality=Modality.DEPTH_FRAME, sensor_id="d0", seed=3,
            scenario=Scenario(person_counts=(n,), salt_frac=0.0),
        )
        return DepthFrame(decode_depth(generate_tick(cfg, tick)))

    def test_empty_room_all_zero(self):
        frames = [(i * 1000, self.depth(0, tick=i)) for i in range(5)]
        series = person_count_series(frames, MOCK_POSTURE_PLUGIN)
        assert [c for _, c in series] == [0] * 5

    def test_scripted_interval(self):
        script = [0, 2, 2, 2, 0]
        frames = [(i * 1000, self.depth(n, tick=i)) for i, n in enumerate(script)]
        series = person_count_series(frames, MOCK_POSTURE_PLUGIN)
        assert [c for _, c in series] == script

    def test_plugin_failure_leaves_gap(self):
        from bedwatch.metrics import InferencePlugin, KIND_POSTURE

        calls = {"n": 0}

        def flaky(frame):
            calls["n"] += 1
            if calls["n"] == 2:
                raise RuntimeError("transient")
            return []

        plugin = InferencePlugin("flaky", "1", KIND_POSTURE, flaky)
        series = person_count_series([(0, None), (1000, None), (2000, None)], plugin)
        assert [c for _, c in series] == [0, None, 0]


def counts_at(base_ts, spec):
    """spec: list of (offset_s, count); 1 Hz samples."""
    return [(base_ts + off * 1000, c) for off, c in spec]


DAY_10AM = 1_700_000_000_000 // 86_400_000 * 86_400_000 + 10 * HOUR
NIGHT_2AM = 1_700_000_000_000 // 86_400_000 * 86_400_000 + 2 * HOUR


class TestVisitation:
    def test_constant_one_no_visits(self):
        series = counts_at(DAY_10AM, [(i, 1) for i in range(600)])
        assert visitation(series) == (0, 0)

    def test_five_minute_visit_at_10am(self):
        series = counts_at(DAY_10AM, [(i, 2) for i in range(300)])
        assert visitation(series) == (1, 0)

    def test_night_visit_counted_by_start(self):
        series = counts_at(NIGHT_2AM, [(i, 3) for i in range(120)])
        assert visitation(series) == (0, 1)

    def test_bursts_30s_apart_merge_to_one(self):
        spec = [(i, 2) for i in range(40)]
        spec += [(i, 1) for i in range(40, 70)]  # 30 s below threshold
        spec += [(i, 2) for i in range(70, 110)]
        series = counts_at(DAY_10AM, spec)
        assert visitation(series) == (1, 0)

    def test_sub_minute_interval_ignored(self):
        series = counts_at(DAY_10AM, [(i, 2) for i in range(30)])  # 30 s only
        assert visitation(series) == (0, 0)

    def test_rechunking_invariance(self):
        rng = random.Random(11)
        spec = [(i, rng.choice([0, 1, 2, 3])) for i in range(3600)]
        series = counts_at(DAY_10AM, spec)
        whole = visitation(series)
        # feeding the same samples in two chunks must not change anything
        # (the function is pure over the full series; chunked callers
        # concatenate before calling)
        assert visitation(series[:1800] + series[1800:]) == whole


class TestEnvStats:
    def test_constant_hour(self):
        base = 1_700_000_000_000 // HOUR * HOUR
        light = [(base + i * 1000, 50.0) for i in range(3600)]
        (w,) = env_stats([], light)
        assert w.light_mean == 50 and w.light_max == 50 and w.sample_count == 3600
        assert w.noise_mean is None

    def test_empty_middle_window_emitted(self):
        base = 1_700_000_000_000 // HOUR * HOUR
        noise = [(base + 10_000, 40.0), (base + 2 * HOUR + 10_000, 42.0)]
        windows = env_stats(noise, [])
        assert len(windows) == 3
        assert windows[1].sample_count == 0 and windows[1].noise_mean is None

    def test_against_brute_force_oracle(self):
        rng = random.Random(13)
        base = 1_699_999_200_000  # deliberately not hour-aligned
        noise = [(base + rng.randrange(0, 5 * HOUR), rng.uniform(30, 90)) for _ in range(500)]
        light = [(base + rng.randrange(0, 5 * HOUR), rng.uniform(0, 300)) for _ in range(400)]
        windows = env_stats(noise, light)

        for w in windows:
            n_vals = [v for ts, v in noise if w.window_start <= ts < w.window_end]
            l_vals = [v for ts, v in light if w.window_start <= ts < w.window_end]
            assert w.sample_count == len(n_vals) + len(l_vals)
            if n_vals:
                assert w.noise_mean == pytest.approx(sum(n_vals) / len(n_vals))
                assert w.noise_max == max(n_vals)
            else:
                assert w.noise_mean is None
            if l_vals:
                assert w.light_mean == pytest.approx(sum(l_vals) / len(l_vals))

        # partition: every sample in exactly one window
        assert sum(w.sample_count for w in windows) == len(noise) + len(light)


class TestNightlyDisruptions:
    def test_quiet_dark_night(self):
        light = [(NIGHT_2AM + i * 1000, 5.0) for i in range(600)]
        noise = [(NIGHT_2AM + i * 1000, 40.0) for i in range(600)]
        assert nightly_disruptions(noise, light) == {}

    def test_two_minute_light_spike_at_2am(self):
        light = [(NIGHT_2AM + i * 1000, 150.0 if i < 120 else 5.0) for i in range(600)]
        result = nightly_disruptions([], light)
        assert sum(result.values()) == 1

    def test_daytime_spike_not_counted(self):
        light = [(DAY_10AM + i * 1000, 500.0) for i in range(120)]
        assert nightly_disruptions([], light) == {}

    def test_noise_or_light_either_triggers(self):
        noise = [(NIGHT_2AM + i * 1000, 75.0 if i < 45 else 30.0) for i in range(600)]
        assert sum(nightly_disruptions(noise, []).values()) == 1

    def test_short_blip_below_min_duration(self):
        light = [(NIGHT_2AM + i * 1000, 150.0 if i < 20 else 5.0) for i in range(600)]
        assert nightly_disruptions([], light) == {}

    def test_gap_merge_rule(self):
        # two 20 s spikes separated by 30 s: merged into one 70 s disruption
        def level(i):
            return 150.0 if (i < 20 or 50 <= i < 70) else 5.0

        light = [(NIGHT_2AM + i * 1000, level(i)) for i in range(600)]
        assert sum(nightly_disruptions([], light).values()) == 1

    def test_two_separate_disruptions(self):
        def level(i):
            return 150.0 if (i < 40 or 200 <= i < 240) else 5.0

        light = [(NIGHT_2AM + i * 1000, level(i)) for i in range(600)]
        assert sum(nightly_disruptions([], light).values()) == 2


class TestScoreSeries:
    def session(self):
        base = 1_700_000_000_000 // HOUR * HOUR
        return PatientSession("P1", "s1", "R1", "c1", base, base + 6 * HOUR), base

    def test_empty_feed_empty_series(self):
        session, _ = self.session()
        assert score_series("s1", "acuity", ACUITY_STUB_PLUGIN, [], session) == []

    def test_values_match_documented_formula(self):
        session, base = self.session()
        vitals = [{"room_id": "R1", "ts": base + 10_000, "heart_rate": 92.0,
                   "resp_rate": 22.0, "spo2": 93.0, "sbp": 100.0, "temp_c": 38.2}]
        points = score_series("s1", "acuity", ACUITY_STUB_PLUGIN, vitals, session)
        z = 0.03 * 12 + 0.10 * 6 - 0.08 * (-4) - 0.02 * (-15) + 0.60 * 1.2
        expected = 1 / (1 + math.exp(-z))
        assert len(points) == 5  # hourly grid points after the first vitals row
        assert all(p.value == pytest.approx(expected, abs=1e-12) for p in points)

    def test_outputs_clamped_to_unit_interval(self):
        session, base = self.session()
        rng = random.Random(9)
        vitals = [
            {"room_id": "R1", "ts": base + i * HOUR + 5000,
             "heart_rate": rng.uniform(20, 220), "resp_rate": rng.uniform(4, 60),
             "spo2": rng.uniform(50, 100), "sbp": rng.uniform(50, 250),
             "temp_c": rng.uniform(33, 43)}
            for i in range(6)
        ]
        points = score_series("s1", "acuity", ACUITY_STUB_PLUGIN, vitals, session)
        assert points and all(0.0 <= p.value <= 1.0 for p in points)

    def test_logistic_score_neutral_is_half(self):
        vitals = {k: center for k, (_, center) in ACUITY_WEIGHTS.items()}
        assert logistic_score(vitals, ACUITY_WEIGHTS) == pytest.approx(0.5)


class TestMetricPoint:
    def test_json_round_trip(self):
        p = MetricPoint("s1", "acuity", 12345, 0.75)
        assert MetricPoint.from_json(p.to_json()) == p

    def test_nonfinite_rejected(self):
        with pytest.raises(MetricsError):
            MetricPoint("s1", "acuity", 0, float("nan"))

    def test_unknown_metric_rejected(self):
        with pytest.raises(MetricsError):
            MetricPoint("s1", "bogus", 0, 1.0)
