"""Out-of-distribution scoring on model logits.

Both scores follow a "higher is more in-distribution" convention when used
as a guard: MSP directly, energy through its negation (the guard compares
``-energy_score`` against the threshold).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GuardVerdict
from .protocol import ErrorCode

MIN_CALIBRATION_SCORES = 20


class ScoreError(ValueError):
    pass


def _check_logits(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=float).reshape(-1)
    if logits.size < 2:
        raise ScoreError(f"need at least 2 logits, got {logits.size}")
    if not np.isfinite(logits).all():
        raise ScoreError("logits must be finite")
    return logits


def msp_score(logits) -> float:
    """Maximum softmax probability, in ``[1/K, 1]``."""
    logits = _check_logits(logits)
    # the max entry becomes exp(0) = 1, so MSP is 1 / sum(exp(l - max))
    return float(1.0 / np.exp(logits - logits.max()).sum())


def energy_score(logits, temperature: float = 1.0) -> float:
    """Free energy ``-T * log(sum(exp(logit / T)))``; lower means more in-distribution."""
    if not (temperature > 0 and math.isfinite(temperature)):
        raise ScoreError("temperature must be a positive finite number")
    z = _check_logits(logits) / temperature
    top = z.max()
    return float(-temperature * (top + math.log(np.exp(z - top).sum())))


def guard_score(logits, method: str, temperature: float = 1.0) -> float:
    if method == "msp":
        return msp_score(logits)
    if method == "energy":
        return -energy_score(logits, temperature)
    raise ScoreError(f"unknown OOD method {method!r}")


@dataclass(frozen=True)
class OODScore:
    method: str
    value: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.value >= self.threshold


def calibrate_threshold(in_dist_scores: Sequence[float], target_pass_rate: float) -> float:
    """Largest threshold that keeps at least ``target_pass_rate`` of the scores.

    With ``n`` scores sorted in descending order, that is the ``m``-th score
    for the smallest ``m`` satisfying ``m / n >= target_pass_rate``.
    """
    scores = np.sort(np.asarray(in_dist_scores, dtype=float))[::-1]
    n = scores.size
    if n < MIN_CALIBRATION_SCORES:
        raise ScoreError(f"need at least {MIN_CALIBRATION_SCORES} scores, got {n}")
    if not np.isfinite(scores).all():
        raise ScoreError("scores must be finite")
    if not 0.0 < target_pass_rate < 1.0:
        raise ScoreError("target_pass_rate must lie in (0, 1)")
    m = max(1, min(n, math.ceil(target_pass_rate * n)))
    # settle float rounding in ceil against the exact pass-rate predicate
    while m > 1 and (m - 1) / n >= target_pass_rate:
        m -= 1
    while m / n < target_pass_rate:
        m += 1
    return float(scores[m - 1])


def pass_rate(scores: Sequence[float], threshold: float) -> float:
    scores = np.asarray(scores, dtype=float)
    return float((scores >= threshold).mean())


def check(logits, config, guard_name: str = "ood-guard") -> GuardVerdict:
    """Reject logits whose OOD score falls below the configured threshold."""
    if not config.is_enabled(guard_name):
        return GuardVerdict.ok(guard_name, skipped=True)
    score = OODScore(config.ood_method,
                     guard_score(logits, config.ood_method, config.ood_temperature),
                     config.ood_threshold)
    confidence = msp_score(logits)
    metrics = {"method": score.method, "score": score.value, "threshold": score.threshold}
    if score.passed:
        return GuardVerdict.ok(guard_name, **metrics)
    return GuardVerdict.rejected(guard_name, ErrorCode.OUT_OF_DISTRIBUTION, "sensor_window",
                                 threshold=score.threshold, model_confidence=confidence, metrics=metrics)
