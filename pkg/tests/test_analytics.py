import math
import random

import numpy as np
import pytest

from bedwatch.analytics import (
    AgreementError,
    AnnotationStore,
    AuAnnotation,
    Box,
    BoxAnalyticsError,
    BoxAnnotation,
    CalibrationError,
    ConsensusError,
    ModelPrediction,
    al_score_labeled,
    al_score_unlabeled,
    annotator_quality,
    cluster_boxes,
    consensus,
    ensemble_weights,
    expected_calibration_error,
    fleiss_kappa,
    iou,
    kappa_for_ratings,
    week_bounds,
    weekly_summary,
)
from bedwatch.core.vocab import AU_LABELS


def au(annotator, item, labels=(), started=0, submitted=1000, skipped=False):
    return AuAnnotation(annotator, item, frozenset(labels), started, submitted, skipped=skipped)


class TestFleissKappa:
    def test_perfect_agreement_multicategory(self):
        # raters always agree per item; categories spread across items
        counts = [[3, 0], [0, 3], [3, 0], [0, 3]]
        assert fleiss_kappa(counts, 3) == pytest.approx(1.0, abs=1e-12)

    def test_hand_case_quarter(self):
        # items {[A,A,B], [B,B,B]}: Pbar = 2/3, Pe = 5/9, kappa = 0.25
        counts = [[2, 1], [0, 3]]
        assert fleiss_kappa(counts, 3) == pytest.approx(0.25, abs=1e-9)

    def test_monte_carlo_random_ratings_near_zero(self):
        rng = np.random.default_rng(2024)
        n_items, n_raters, k = 10_000, 3, 4
        counts = np.zeros((n_items, k), dtype=np.int64)
        votes = rng.integers(0, k, size=(n_items, n_raters))
        for i in range(n_items):
            for v in votes[i]:
                counts[i, v] += 1
        assert abs(fleiss_kappa(counts, n_raters)) < 0.05

    def test_degenerate_single_category_is_nan(self):
        assert math.isnan(fleiss_kappa([[3, 0], [3, 0]], 3))

    def test_fewer_than_two_raters_rejected(self):
        with pytest.raises(AgreementError):
            fleiss_kappa([[1, 0]], 1)

    def test_unequal_rating_counts_rejected(self):
        with pytest.raises(AgreementError):
            fleiss_kappa([[2, 1], [1, 1]], 3)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(7)
        counts = rng.multinomial(4, [0.5, 0.3, 0.2], size=50)
        permuted = counts[:, [2, 0, 1]]
        assert fleiss_kappa(counts, 4) == pytest.approx(fleiss_kappa(permuted, 4), abs=1e-12)

    def test_builder_excludes_and_reports(self):
        ratings = {"i1": ["a", "a", "b"], "i2": ["b", "b", "b"], "i3": ["a", "b"]}
        result = kappa_for_ratings(ratings, ["a", "b"])
        assert result.n_raters == 3 and result.n_items == 2
        assert result.excluded_items == ["i3"]
        assert result.kappa == pytest.approx(0.25, abs=1e-9)


class TestECE:
    def test_perfectly_confident_and_correct(self):
        preds = [(1.0, 1)] * 10
        assert expected_calibration_error(preds) == pytest.approx(0.0, abs=1e-12)

    def test_hand_case_quarter(self):
        preds = [(0.9, 1), (0.9, 0), (0.6, 1), (0.6, 0)]
        assert expected_calibration_error(preds) == pytest.approx(0.25, abs=1e-9)

    def test_single_bin_self_calibrated(self):
        # all in one bin with acc == mean conf
        preds = [(0.8, 1), (0.8, 1), (0.8, 1), (0.8, 1), (0.8, 0)]
        assert expected_calibration_error(preds) == pytest.approx(0.0, abs=1e-12)

    def test_self_calibrated_multibin(self):
        preds = []
        for conf, n in ((0.25, 4), (0.75, 4)):
            hits = int(round(conf * n))
            preds += [(conf, 1)] * hits + [(conf, 0)] * (n - hits)
        assert expected_calibration_error(preds) == pytest.approx(0.0, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(CalibrationError):
            expected_calibration_error([])

    def test_bin_edges_half_open_last_closed(self):
        # 0.1 falls in bin [0.1, 0.2); 1.0 lands in the last bin
        assert expected_calibration_error([(0.1, 0)]) == pytest.approx(0.1)
        assert expected_calibration_error([(1.0, 1)]) == pytest.approx(0.0)

    def test_bounded_unit_interval(self):
        rng = random.Random(3)
        preds = [(rng.random(), rng.randint(0, 1)) for _ in range(500)]
        assert 0.0 <= expected_calibration_error(preds) <= 1.0


class TestEnsembleWeights:
    def test_single_model(self):
        assert ensemble_weights([0.2]) == [1.0]

    def test_hand_case(self):
        w = ensemble_weights([0.1, 0.3])
        assert w == pytest.approx([0.5625, 0.4375], abs=1e-12)

    def test_equal_eces_uniform(self):
        assert ensemble_weights([0.4, 0.4, 0.4]) == pytest.approx([1 / 3] * 3)

    def test_all_ece_one_uniform(self):
        assert ensemble_weights([1.0, 1.0]) == [0.5, 0.5]

    def test_normalized(self):
        rng = random.Random(4)
        eces = [rng.random() for _ in range(7)]
        assert sum(ensemble_weights(eces)) == pytest.approx(1.0)


class TestAnnotatorQuality:
    def test_perfect_annotator(self):
        anns = [
            au("alice", "i1", ("AU4",)),
            au("bob", "i1", ("AU4",)),
            au("carol", "i1", ("AU4",)),
        ]
        probs = {}
        for item in ("i1",):
            for label in AU_LABELS:
                probs[(item, label)] = 1.0 if label == "AU4" else 0.0
        q = annotator_quality(anns, probs)
        assert q["alice"].weight == pytest.approx(1.0)

    def test_blend_hand_case_065(self):
        # confidences {0.9, 0.7} and agreements {1, 0} blend to
        # 0.5*0.8 + 0.5*0.5 = 0.65
        conf_mean = (0.9 + 0.7) / 2
        agree_mean = (1 + 0) / 2
        assert 0.5 * conf_mean + 0.5 * agree_mean == pytest.approx(0.65, abs=1e-12)

    def test_blend_through_public_path(self):
        # model only scores (i1, AU4) at 0.9; peers agree with "a" on every
        # AU, so weight = 0.5*0.9 + 0.5*1.0 = 0.95
        anns = [
            au("a", "i1", ("AU4",)),
            au("p1", "i1", ("AU4",)),
            au("p2", "i1", ("AU4",)),
        ]
        q = annotator_quality(anns, {("i1", "AU4"): 0.9}, alpha=0.5)
        assert q["a"].weight == pytest.approx(0.95, abs=1e-12)

    def test_split_peers_count_half(self):
        # the two peers disagree on AU4: the pair contributes 0.5 agreement
        anns = [
            au("a", "i1", ("AU4",)),
            au("p1", "i1", ("AU4",)),
            au("p2", "i1", ()),
        ]
        q = annotator_quality(anns, {("i1", "AU4"): 1.0}, alpha=0.5)
        # agreement: AU4 pair 0.5, eleven unanimous-absent pairs 1.0 each
        agree_mean = (0.5 + 11 * 1.0) / 12
        assert q["a"].weight == pytest.approx(0.5 * 1.0 + 0.5 * agree_mean, abs=1e-12)

    def test_alpha_one_pure_model_confidence(self):
        anns = [au("a", "i1", ("AU4",)), au("b", "i1", ()), au("c", "i1", ())]
        probs = {("i1", label): (0.8 if label == "AU4" else 0.0) for label in AU_LABELS}
        q = annotator_quality(anns, probs, alpha=1.0)
        expected = (0.8 + 11 * 1.0) / 12  # AU4 conf 0.8; other AUs: 1 - 0 = 1
        assert q["a"].weight == pytest.approx(expected, abs=1e-12)

    def test_no_peer_overlap_falls_back_to_confidence(self):
        anns = [au("solo", "i9", ("AU4",))]
        probs = {("i9", label): (0.9 if label == "AU4" else 0.0) for label in AU_LABELS}
        q = annotator_quality(anns, probs, alpha=0.5)
        expected = (0.9 + 11 * 1.0) / 12
        assert q["solo"].weight == pytest.approx(expected, abs=1e-12)

    def test_zero_annotation_annotator_excluded(self):
        q = annotator_quality([au("a", "i1", ())], {("i1", l): 0.0 for l in AU_LABELS})
        assert "ghost" not in q


class TestConsensus:
    def test_hand_case_weighted_vote(self):
        anns = [au("a", "i", ("AU4",)), au("b", "i", ("AU4",)), au("c", "i", ())]
        weights = {"a": 0.5, "b": 0.3, "c": 0.2}
        result = consensus(anns, weights, model=None)
        assert result["AU4"].label == 1
        assert result["AU4"].quality == pytest.approx(0.8, abs=1e-12)

    def test_unanimous_quality_one(self):
        anns = [au("a", "i", ("AU6",)), au("b", "i", ("AU6",))]
        result = consensus(anns, {"a": 0.7, "b": 0.3})
        assert result["AU6"].label == 1 and result["AU6"].quality == pytest.approx(1.0)

    def test_model_half_probability_neutral(self):
        anns = [au("a", "i", ("AU4",)), au("b", "i", ())]
        weights = {"a": 0.6, "b": 0.4}
        pred = ModelPrediction("m", "i", {label: 0.5 for label in AU_LABELS})
        with_model = consensus(anns, weights, pred)
        without = consensus(anns, weights, None)
        for label in AU_LABELS:
            assert with_model[label].label == without[label].label

    def test_tie_breaks_toward_absent(self):
        anns = [au("a", "i", ("AU4",)), au("b", "i", ())]
        result = consensus(anns, {"a": 0.5, "b": 0.5})
        assert result["AU4"].label == 0

    def test_all_zero_weights_error(self):
        with pytest.raises(ConsensusError):
            consensus([au("a", "i", ("AU4",))], {"a": 0.0})

    def test_argmax_invariant_under_weight_scaling(self):
        rng = random.Random(12)
        for _ in range(50):
            anns = [
                au(f"a{k}", "i", tuple(l for l in AU_LABELS if rng.random() < 0.3))
                for k in range(rng.randint(1, 5))
            ]
            weights = {f"a{k}": rng.uniform(0.05, 1.0) for k in range(len(anns))}
            pred = ModelPrediction("m", "i", {l: rng.random() for l in AU_LABELS})
            wm = 0.5
            scale = rng.choice([0.25, 2.0, 7.5])
            base = consensus(anns, weights, pred, model_weight=wm)
            scaled = consensus(
                anns, {k: v * scale for k, v in weights.items()}, pred, model_weight=wm * scale
            )
            for label in AU_LABELS:
                assert base[label].label == scaled[label].label
                assert base[label].quality == pytest.approx(scaled[label].quality, abs=1e-9)


class TestAlScores:
    def test_labeled_hand_case(self):
        from bedwatch.analytics import ClassConsensus

        cons = {"AU4": ClassConsensus(1, 0.8)}
        preds = [ModelPrediction("m", "i", {"AU4": 0.6})]
        score = al_score_labeled("i", cons, preds, [1.0], beta=0.5)
        assert score.per_class["AU4"] == pytest.approx(0.3, abs=1e-12)
        assert score.item_priority == pytest.approx(0.3, abs=1e-12)

    def test_nothing_to_gain(self):
        from bedwatch.analytics import ClassConsensus

        cons = {"AU4": ClassConsensus(1, 1.0)}
        preds = [ModelPrediction("m", "i", {"AU4": 1.0})]
        score = al_score_labeled("i", cons, preds, [1.0])
        assert score.per_class["AU4"] == pytest.approx(0.0, abs=1e-12)

    def test_labeled_priority_bounded_by_half_beta(self):
        # the winning side holds at least half the mass, so quality >= 0.5
        # and priority <= 1 - beta/2
        from bedwatch.analytics import ClassConsensus

        rng = random.Random(8)
        beta = 0.5
        for _ in range(200):
            q = rng.uniform(0.5, 1.0)
            c = rng.random()
            cons = {"AU4": ClassConsensus(rng.randint(0, 1), q)}
            preds = [ModelPrediction("m", "i", {"AU4": c})]
            score = al_score_labeled("i", cons, preds, [1.0], beta=beta)
            assert score.per_class["AU4"] <= 1 - beta / 2 + 1e-12

    def test_unlabeled_maximal_at_half(self):
        preds = [ModelPrediction("m", "i", {l: 0.5 for l in AU_LABELS})]
        score = al_score_unlabeled("i", preds, [1.0])
        assert score.item_priority == pytest.approx(1.0)

    def test_unlabeled_zero_at_certainty(self):
        for p in (0.0, 1.0):
            preds = [ModelPrediction("m", "i", {l: p for l in AU_LABELS})]
            score = al_score_unlabeled("i", preds, [1.0])
            assert score.item_priority == pytest.approx(0.0)

    def test_disagreeing_models_maximal(self):
        preds = [
            ModelPrediction("m1", "i", {l: 0.9 for l in AU_LABELS}),
            ModelPrediction("m2", "i", {l: 0.1 for l in AU_LABELS}),
        ]
        score = al_score_unlabeled("i", preds, [0.5, 0.5])
        assert score.item_priority == pytest.approx(1.0)


class TestIoU:
    def test_identical(self):
        assert iou((0, 0, 10, 10), (0, 0, 10, 10)) == pytest.approx(1.0)

    def test_hand_case_one_seventh(self):
        assert iou((0, 0, 10, 10), (5, 5, 10, 10)) == pytest.approx(1 / 7, abs=1e-9)

    def test_disjoint_zero(self):
        assert iou((0, 0, 4, 4), (10, 10, 2, 2)) == 0.0

    def test_symmetric(self):
        rng = random.Random(5)
        for _ in range(50):
            a = (rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 20), rng.uniform(1, 20))
            b = (rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 20), rng.uniform(1, 20))
            assert iou(a, b) == pytest.approx(iou(b, a), abs=1e-12)
            assert 0.0 <= iou(a, b) <= 1.0


def box_ann(annotator, boxes, item="d1"):
    return BoxAnnotation(
        annotator, item, tuple(Box(x, y, w, h, label) for x, y, w, h, label in boxes), 0, 1000
    )


class TestClusterBoxes:
    def test_unanimous_single_cluster_priority_zero(self):
        anns = [
            box_ann("a", [(10, 10, 20, 30, "sitting")]),
            box_ann("b", [(10, 10, 20, 30, "sitting")]),
            box_ann("c", [(10, 10, 20, 30, "sitting")]),
        ]
        weights = {"a": 0.5, "b": 0.4, "c": 0.7}
        clusters, score = cluster_boxes(anns, weights)
        assert len(clusters) == 1
        assert clusters[0].agreement == pytest.approx(1.0)
        assert score.item_priority == pytest.approx(0.0)

    def test_disjoint_boxes_two_clusters_half(self):
        anns = [
            box_ann("a", [(0, 0, 10, 10, "sitting")]),
            box_ann("b", [(50, 50, 10, 10, "sitting")]),
        ]
        clusters, score = cluster_boxes(anns, {"a": 0.5, "b": 0.5})
        assert len(clusters) == 2
        assert all(c.agreement == pytest.approx(0.5) for c in clusters)
        assert score.item_priority == pytest.approx(0.5)

    def test_same_position_different_labels_separate(self):
        anns = [
            box_ann("a", [(0, 0, 10, 10, "sitting")]),
            box_ann("b", [(0, 0, 10, 10, "standing")]),
        ]
        clusters, _ = cluster_boxes(anns, {"a": 0.5, "b": 0.5})
        assert len(clusters) == 2

    def test_empty_annotator_lowers_agreement(self):
        anns = [
            box_ann("a", [(0, 0, 10, 10, "sitting")]),
            box_ann("b", []),
        ]
        clusters, score = cluster_boxes(anns, {"a": 0.5, "b": 0.5})
        assert clusters[0].agreement == pytest.approx(0.5)

    def test_no_boxes_at_all_priority_zero(self):
        anns = [box_ann("a", []), box_ann("b", [])]
        clusters, score = cluster_boxes(anns, {"a": 0.5, "b": 0.5})
        assert clusters == [] and score.item_priority == 0.0

    def test_at_most_one_box_per_annotator_per_cluster(self):
        anns = [
            box_ann("a", [(0, 0, 10, 10, "sitting"), (1, 1, 10, 10, "sitting")]),
            box_ann("b", [(0, 0, 10, 10, "sitting")]),
        ]
        clusters, _ = cluster_boxes(anns, {"a": 0.6, "b": 0.4})
        for c in clusters:
            annotators = [a for a, _ in c.members]
            assert len(annotators) == len(set(annotators))

    def test_order_permutation_determinism_100_shuffles(self):
        rng = random.Random(42)
        labels = ["sitting", "standing", "assisted_1"]
        anns = []
        for k in range(5):
            boxes = [
                (rng.uniform(0, 80), rng.uniform(0, 60), rng.uniform(5, 30),
                 rng.uniform(5, 30), rng.choice(labels))
                for _ in range(rng.randint(0, 4))
            ]
            anns.append(box_ann(f"a{k}", boxes))
        weights = {f"a{k}": rng.uniform(0.1, 1.0) for k in range(5)}
        ref_clusters, ref_score = cluster_boxes(anns, weights)
        ref_repr = [(c.label, c.rep, sorted(a for a, _ in c.members)) for c in ref_clusters]
        for _ in range(100):
            shuffled = anns[:]
            rng.shuffle(shuffled)
            clusters, score = cluster_boxes(shuffled, weights)
            got = [(c.label, c.rep, sorted(a for a, _ in c.members)) for c in clusters]
            assert got == ref_repr
            assert score.item_priority == pytest.approx(ref_score.item_priority, abs=1e-12)

    def test_multiple_items_rejected(self):
        with pytest.raises(BoxAnalyticsError):
            cluster_boxes(
                [box_ann("a", [], item="d1"), box_ann("b", [], item="d2")], {"a": 1, "b": 1}
            )


class TestWeeklySummary:
    def test_hand_arithmetic(self, tmp_path):
        store = AnnotationStore(tmp_path)
        start, _ = week_bounds("2026-08-03")
        for i, dur in enumerate((10_000, 20_000, 40_000)):
            store.append(
                AuAnnotation("alice", f"i{i}", frozenset({"AU4"}), start + i * 100_000,
                             start + i * 100_000 + dur)
            )
        summary = weekly_summary(store, "2026-08-03")
        alice = summary.annotators["alice"]
        assert alice.count == 3
        assert alice.median_seconds == pytest.approx(20.0)
        assert alice.active_hours == pytest.approx(70 / 3600, abs=1e-6)

    def test_absent_annotator_not_listed(self, tmp_path):
        store = AnnotationStore(tmp_path)
        summary = weekly_summary(store, "2026-08-03")
        assert summary.annotators == {}

    def test_kappa_section_matches_direct_computation(self, tmp_path):
        store = AnnotationStore(tmp_path)
        start, _ = week_bounds("2026-08-03")
        # item i1: [present, present, absent]; item i2: [absent, absent, absent]
        votes = {"i1": ["AU4", "AU4", None], "i2": [None, None, None]}
        for item, vs in votes.items():
            for k, v in enumerate(vs):
                labels = frozenset({v}) if v else frozenset()
                store.append(AuAnnotation(f"a{k}", item, labels, start, start + 1000))
        summary = weekly_summary(store, "2026-08-03")
        assert summary.kappa_by_label["AU4"].kappa == pytest.approx(0.25, abs=1e-9)

    def test_skipped_excluded_from_count(self, tmp_path):
        store = AnnotationStore(tmp_path)
        start, _ = week_bounds("2026-08-03")
        store.append(AuAnnotation("a", "i1", frozenset(), start, start + 500, skipped=True))
        summary = weekly_summary(store, "2026-08-03")
        assert summary.annotators["a"].count == 0
        assert summary.annotators["a"].skipped == 1
        assert summary.annotators["a"].median_seconds is None

    def test_out_of_week_excluded(self, tmp_path):
        store = AnnotationStore(tmp_path)
        start, end = week_bounds("2026-08-03")
        store.append(AuAnnotation("a", "i1", frozenset(), end, end + 1000))
        summary = weekly_summary(store, "2026-08-03")
        assert summary.annotators == {}


class TestAlRandomizedProperties:
    """1,000 randomized cases over the full labeled scoring path."""

    def _random_case(self, rng):
        n_ann = rng.randint(1, 5)
        anns = [
            au(f"a{k}", "item", tuple(l for l in AU_LABELS if rng.random() < 0.35))
            for k in range(n_ann)
        ]
        weights = {f"a{k}": rng.uniform(0.05, 1.0) for k in range(n_ann)}
        n_models = rng.randint(1, 3)
        preds = [
            ModelPrediction(f"m{j}", "item", {l: rng.random() for l in AU_LABELS})
            for j in range(n_models)
        ]
        eces = [rng.uniform(0.0, 0.9) for _ in range(n_models)]
        mw = ensemble_weights(eces)
        return anns, weights, preds, mw

    def test_thousand_randomized_cases(self):
        rng = random.Random(20_260)
        for case in range(1000):
            anns, weights, preds, mw = self._random_case(rng)
            cons = consensus(anns, weights, preds[0])
            score = al_score_labeled("item", cons, preds, mw)

            # all priorities in [0, 1]
            assert all(0.0 <= p <= 1.0 for p in score.per_class.values())
            assert 0.0 <= score.item_priority <= 1.0

            target_au = AU_LABELS[case % len(AU_LABELS)]
            before = cons[target_au]

            # an agreeing annotation never lowers consensus quality and
            # never raises the labeled priority for that class
            agree_labels = (
                (target_au,) if before.label == 1 else ()
            )
            extra = au("extra", "item", agree_labels)
            weights2 = dict(weights, extra=rng.uniform(0.05, 1.0))
            cons2 = consensus([*anns, extra], weights2, preds[0])
            score2 = al_score_labeled("item", cons2, preds, mw)
            assert cons2[target_au].label == before.label
            assert cons2[target_au].quality >= before.quality - 1e-12
            assert score2.per_class[target_au] <= score.per_class[target_au] + 1e-12

            # a conflicting annotation (against the final consensus) never
            # raises consensus quality
            conflict_labels = () if cons2[target_au].label == 1 else (target_au,)
            conflict = au("conflict", "item", conflict_labels)
            weights3 = dict(weights2, conflict=rng.uniform(0.05, 1.0))
            cons3 = consensus([*anns, extra, conflict], weights3, preds[0])
            if cons3[target_au].label == cons2[target_au].label:
                assert cons3[target_au].quality <= cons2[target_au].quality + 1e-12

    def test_unlabeled_maximal_iff_half(self):
        rng = random.Random(99)
        for _ in range(500):
            preds = [ModelPrediction("m", "i", {l: rng.random() for l in AU_LABELS})]
            score = al_score_unlabeled("i", preds, [1.0])
            for label in AU_LABELS:
                p = preds[0].au_probs[label]
                if abs(p - 0.5) > 1e-9:
                    assert score.per_class[label] < 1.0
        # exact half: maximal
        preds = [ModelPrediction("m", "i", {l: 0.5 for l in AU_LABELS})]
        assert al_score_unlabeled("i", preds, [1.0]).item_priority == 1.0
