"""Expected calibration error and the model weights derived from it.

ECE bins confidences into 10 equal-width bins [i/10, (i+1)/10), the last
bin closed, and averages |accuracy - confidence| weighted by bin mass.
Models with lower ECE carry more weight in the active-learning ensemble.
"""

from __future__ import annotations

from typing import Sequence

from ..core.types import BedwatchError


class CalibrationError(BedwatchError):
    pass


def expected_calibration_error(
    predictions: Sequence[tuple[float, int]], bins: int = 10
) -> float:
    """predictions: (confidence, outcome) pairs, outcome 1 = correct."""
    if not predictions:
        raise CalibrationError("ECE of an empty prediction set is undefined")
    if bins < 1:
        raise CalibrationError("need at least one bin")
    totals = [0] * bins
    conf_sums = [0.0] * bins
    hit_sums = [0] * bins
    for conf, outcome in predictions:
        if not (0.0 <= conf <= 1.0):
            raise CalibrationError(f"confidence out of range: {conf}")
        if outcome not in (0, 1):
            raise CalibrationError(f"outcome must be 0 or 1, got {outcome!r}")
        b = min(int(conf * bins), bins - 1)  # last bin closed at 1.0
        totals[b] += 1
        conf_sums[b] += conf
        hit_sums[b] += outcome
    n = len(predictions)
    ece = 0.0
    for b in range(bins):
        if totals[b] == 0:
            continue
        acc = hit_sums[b] / totals[b]
        conf = conf_sums[b] / totals[b]
        ece += (totals[b] / n) * abs(acc - conf)
    return ece


def ensemble_weights(eces: Sequence[float]) -> list[float]:
    """weight_m = (1 - ECE_m) / sum_k (1 - ECE_k); uniform if all ECEs are 1."""
    if not eces:
        raise CalibrationError("need at least one model")
    for e in eces:
        if not (0.0 <= e <= 1.0):
            raise CalibrationError(f"ECE out of range: {e}")
    raw = [1.0 - e for e in eces]
    total = sum(raw)
    if total == 0.0:
        return [1.0 / len(eces)] * len(eces)
    return [r / total for r in raw]
