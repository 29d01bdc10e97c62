"""Inference-time adversarial-input detection by prediction instability.

Adversarial inputs tend to sit just across a decision boundary, so small
random perturbations flip the predicted label far more often than they do
for natural inputs. The detector re-runs the model on Gaussian-perturbed
copies of the feature vector and reports the share whose argmax changes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .core import GuardVerdict
from .model import softmax
from .protocol import ErrorCode

MIN_SAMPLES = 8


@dataclass(frozen=True)
class StabilityReport:
    base_label: int
    base_confidence: float
    flips: int
    samples: int
    mean_confidence_drop: float
    noise_scale: float

    @property
    def flip_fraction(self) -> float:
        return self.flips / self.samples


def request_seed(random_seed: int, features) -> int:
    """Per-request seed from the configured seed and the feature bytes."""
    h = hashlib.sha256(struct.pack("<q", int(random_seed)))
    h.update(np.ascontiguousarray(features, dtype="<f8").tobytes())
    return int.from_bytes(h.digest()[:8], "little")


def stability_score(features, model, noise_scale: float, samples: int, seed: int,
                    base_logits=None) -> StabilityReport:
    if samples < MIN_SAMPLES:
        raise ValueError(f"samples must be >= {MIN_SAMPLES}")
    if not noise_scale >= 0:
        raise ValueError("noise_scale must be >= 0")
    x = np.asarray(features, dtype=float).reshape(-1)
    if base_logits is None:
        base_logits = model.logits(x[None, :])[0]
    base_probs = softmax(base_logits)
    base_label = int(np.argmax(base_logits))
    base_conf = float(base_probs[base_label])
    if noise_scale == 0:
        # every copy equals the input
        return StabilityReport(base_label, base_conf, 0, samples, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    perturbed = x + rng.normal(0.0, noise_scale, size=(samples, x.size))
    logits = model.logits(perturbed)
    flips = int((logits.argmax(axis=1) != base_label).sum())
    drop = float(base_conf - softmax(logits)[:, base_label].mean())
    return StabilityReport(base_label, base_conf, flips, samples, drop, float(noise_scale))


def check(features, model, config, base_logits=None, guard_name: str = "adversarial-guard") -> GuardVerdict:
    if not config.is_enabled(guard_name):
        return GuardVerdict.ok(guard_name, skipped=True)
    report = stability_score(features, model, config.adv_noise_scale, config.adv_samples,
                             request_seed(config.random_seed, features), base_logits)
    metrics = {"flip_fraction": report.flip_fraction, "threshold": config.adv_flip_threshold,
               "samples": report.samples}
    if report.flip_fraction > config.adv_flip_threshold:
        return GuardVerdict.rejected(guard_name, ErrorCode.ADVERSARIAL_ATTACK_DETECTED, "sensor_window",
                                     threshold=config.adv_flip_threshold,
                                     model_confidence=report.base_confidence, metrics=metrics)
    return GuardVerdict.ok(guard_name, **metrics)
