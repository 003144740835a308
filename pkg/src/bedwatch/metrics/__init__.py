from .plugins import (
    ACUITY_STUB_PLUGIN,
    ACUITY_WEIGHTS,
    DELIRIUM_STUB_PLUGIN,
    DELIRIUM_WEIGHTS,
    KIND_ACUITY,
    KIND_AU,
    KIND_FACE,
    KIND_POSTURE,
    MOCK_AU_PLUGIN,
    MOCK_POSTURE_PLUGIN,
    InferencePlugin,
    PluginError,
    logistic_score,
    person_count_series,
    run_au_inference,
)
from .scores import score_series
from .series import (
    METRICS,
    EnvWindowStats,
    MetricPoint,
    MetricsError,
    env_stats,
    in_day_window,
    nightly_disruptions,
    read_metric_points,
    visitation,
    write_metric_points,
)

__all__ = [
    "ACUITY_STUB_PLUGIN",
    "ACUITY_WEIGHTS",
    "DELIRIUM_STUB_PLUGIN",
    "DELIRIUM_WEIGHTS",
    "EnvWindowStats",
    "InferencePlugin",
    "KIND_ACUITY",
    "KIND_AU",
    "KIND_FACE",
    "KIND_POSTURE",
    "METRICS",
    "MOCK_AU_PLUGIN",
    "MOCK_POSTURE_PLUGIN",
    "MetricPoint",
    "MetricsError",
    "PluginError",
    "env_stats",
    "in_day_window",
    "logistic_score",
    "nightly_disruptions",
    "person_count_series",
    "read_metric_points",
    "run_au_inference",
    "score_series",
    "visitation",
    "write_metric_points",
]
