"""Annotator quality, weighted consensus and active-learning priorities.

Per-AU binary framing of the multilabel task: an annotator votes 1 for
every AU in their label set and 0 for the rest. The model joins the vote
as a virtual annotator, contributing weight*p to "present" and
weight*(1-p) to "absent". Priorities are in [0, 1]; 1 means most in need
of (re-)annotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..core.types import BedwatchError
from ..core.vocab import AU_LABELS
from .records import AuAnnotation, ModelPrediction

DEFAULT_ALPHA = 0.5  # model-confidence vs peer-agreement mix
DEFAULT_BETA = 0.5  # consensus-quality vs ensemble-confidence mix
DEFAULT_MODEL_WEIGHT = 0.5


class ConsensusError(BedwatchError):
    pass


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


@dataclass(frozen=True)
class AnnotatorQuality:
    annotator_id: str
    weight: float

    def __post_init__(self):
        if not (0.0 <= self.weight <= 1.0):
            raise ConsensusError(f"weight out of range: {self.weight}")


def annotator_quality(
    annotations: Sequence[AuAnnotation],
    model_probs: Mapping[tuple[str, str], float],
    alpha: float = DEFAULT_ALPHA,
) -> dict[str, AnnotatorQuality]:
    """Blend of model confidence in the annotator's labels and agreement
    with the unweighted majority of the other annotators.

    model_probs maps (item_id, au_label) to the model's probability that
    the AU is present. Annotators with no peer overlap fall back to the
    model-confidence mean alone; annotators with no annotations are absent
    from the result.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ConsensusError(f"alpha out of range: {alpha}")
    live = [a for a in annotations if not a.skipped]
    by_item: dict[str, list[AuAnnotation]] = {}
    for a in live:
        by_item.setdefault(a.item_id, []).append(a)

    out: dict[str, AnnotatorQuality] = {}
    annotators = sorted({a.annotator_id for a in live})
    for annotator in annotators:
        confs: list[float] = []
        agrees: list[float] = []
        for item_id, group in by_item.items():
            mine = [a for a in group if a.annotator_id == annotator]
            if not mine:
                continue
            labels = mine[0].labels
            others = [a for a in group if a.annotator_id != annotator]
            for au in AU_LABELS:
                vote = 1 if au in labels else 0
                key = (item_id, au)
                if key in model_probs:
                    p = model_probs[key]
                    confs.append(p if vote == 1 else 1.0 - p)
                if len(others) >= 2:
                    ones = sum(1 for o in others if au in o.labels)
                    zeros = len(others) - ones
                    if ones == zeros:
                        agrees.append(0.5)  # peers are split: count half
                    else:
                        majority = 1 if ones > zeros else 0
                        agrees.append(1.0 if vote == majority else 0.0)
        if not confs and not agrees:
            continue
        conf_mean = sum(confs) / len(confs) if confs else 0.0
        if agrees:
            weight = alpha * conf_mean + (1.0 - alpha) * (sum(agrees) / len(agrees))
        else:
            weight = conf_mean  # no peer overlap: model confidence only
        out[annotator] = AnnotatorQuality(annotator, _clamp01(weight))
    return out


@dataclass(frozen=True)
class ClassConsensus:
    label: int  # 0 absent, 1 present
    quality: float  # winning mass / total mass


def consensus(
    annotations: Sequence[AuAnnotation],
    weights: Mapping[str, float],
    model: ModelPrediction | None = None,
    model_weight: float = DEFAULT_MODEL_WEIGHT,
    classes: Sequence[str] = AU_LABELS,
) -> dict[str, ClassConsensus]:
    """Weighted per-class vote; ties break toward absent (AUs are sparse)."""
    live = [a for a in annotations if not a.skipped]
    if not live:
        raise ConsensusError("consensus needs at least one annotation")
    out: dict[str, ClassConsensus] = {}
    for cls in classes:
        v1 = v0 = 0.0
        for a in live:
            w = float(weights.get(a.annotator_id, 0.0))
            if cls in a.labels:
                v1 += w
            else:
                v0 += w
        if model is not None and cls in model.au_probs:
            p = model.au_probs[cls]
            v1 += model_weight * p
            v0 += model_weight * (1.0 - p)
        total = v0 + v1
        if total <= 0.0:
            raise ConsensusError("all voter weights are zero")
        label = 1 if v1 > v0 else 0
        out[cls] = ClassConsensus(label, (v1 if label == 1 else v0) / total)
    return out


@dataclass(frozen=True)
class ActiveLearningScore:
    item_id: str
    per_class: dict[str, float]
    item_priority: float

    def __post_init__(self):
        for cls, p in self.per_class.items():
            if not (-1e-12 <= p <= 1.0 + 1e-12):
                raise ConsensusError(f"priority for {cls} out of range: {p}")


def _ensemble_conf_in_label(
    predictions: Sequence[ModelPrediction],
    model_weights: Sequence[float],
    cls: str,
    label: int,
) -> float:
    """Weighted ensemble confidence that the class takes the given value."""
    c = 0.0
    for pred, w in zip(predictions, model_weights):
        p = pred.au_probs.get(cls, 0.5)  # an abstaining model is uninformative
        c += w * (p if label == 1 else 1.0 - p)
    return c


def al_score_labeled(
    item_id: str,
    class_consensus: Mapping[str, ClassConsensus],
    predictions: Sequence[ModelPrediction],
    model_weights: Sequence[float],
    beta: float = DEFAULT_BETA,
) -> ActiveLearningScore:
    """priority = 1 - (beta * consensus_quality + (1-beta) * ensemble conf
    in the consensus label), per class; item priority is the class mean."""
    if not (0.0 <= beta <= 1.0):
        raise ConsensusError(f"beta out of range: {beta}")
    per_class = {}
    for cls, cons in class_consensus.items():
        c = _ensemble_conf_in_label(predictions, model_weights, cls, cons.label)
        per_class[cls] = _clamp01(1.0 - (beta * cons.quality + (1.0 - beta) * c))
    if not per_class:
        raise ConsensusError("no classes to score")
    item_priority = sum(per_class.values()) / len(per_class)
    return ActiveLearningScore(item_id, per_class, item_priority)


def al_score_unlabeled(
    item_id: str,
    predictions: Sequence[ModelPrediction],
    model_weights: Sequence[float],
    classes: Sequence[str] = AU_LABELS,
) -> ActiveLearningScore:
    """priority = 1 - |2*pbar - 1|: maximal exactly at ensemble probability 0.5."""
    per_class = {}
    for cls in classes:
        p_bar = 0.0
        for pred, w in zip(predictions, model_weights):
            p_bar += w * pred.au_probs.get(cls, 0.5)
        per_class[cls] = _clamp01(1.0 - abs(2.0 * p_bar - 1.0))
    if not per_class:
        raise ConsensusError("no classes to score")
    item_priority = sum(per_class.values()) / len(per_class)
    return ActiveLearningScore(item_id, per_class, item_priority)
