from .agreement import AgreementError, KappaResult, build_counts, fleiss_kappa, kappa_for_ratings
from .boxes import DEFAULT_IOU_THR, BoxAnalyticsError, BoxCluster, cluster_boxes, iou
from .calibration import CalibrationError, ensemble_weights, expected_calibration_error
from .consensus import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_MODEL_WEIGHT,
    ActiveLearningScore,
    AnnotatorQuality,
    ClassConsensus,
    ConsensusError,
    al_score_labeled,
    al_score_unlabeled,
    annotator_quality,
    consensus,
)
from .records import (
    TASK_DEPTH,
    TASK_FACE,
    AnnotationError,
    AnnotationStore,
    AuAnnotation,
    Box,
    BoxAnnotation,
    ModelPrediction,
)
from .summary import AnnotatorSummary, WeeklySummary, week_bounds, weekly_summary

__all__ = [
    "ActiveLearningScore",
    "AgreementError",
    "AnnotationError",
    "AnnotationStore",
    "AnnotatorQuality",
    "AnnotatorSummary",
    "AuAnnotation",
    "Box",
    "BoxAnalyticsError",
    "BoxAnnotation",
    "BoxCluster",
    "CalibrationError",
    "ClassConsensus",
    "ConsensusError",
    "DEFAULT_ALPHA",
    "DEFAULT_BETA",
    "DEFAULT_IOU_THR",
    "DEFAULT_MODEL_WEIGHT",
    "KappaResult",
    "ModelPrediction",
    "TASK_DEPTH",
    "TASK_FACE",
    "WeeklySummary",
    "al_score_labeled",
    "al_score_unlabeled",
    "annotator_quality",
    "build_counts",
    "cluster_boxes",
    "consensus",
    "ensemble_weights",
    "expected_calibration_error",
    "fleiss_kappa",
    "iou",
    "kappa_for_ratings",
    "week_bounds",
    "weekly_summary",
]
