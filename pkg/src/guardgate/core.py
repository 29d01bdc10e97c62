"""Domain types shared by the guards and the pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from .protocol import ErrorCode, Scalar

BUILTIN_GUARDS = ("input-validator", "adversarial-guard", "ood-guard", "explainer")
OOD_METHODS = ("msp", "energy")


@dataclass(frozen=True)
class InferenceRequest:
    """Parsed ``/v1/infer`` body. ``sensor_window`` is the raw JSON value."""

    attributes: Mapping[str, Any] = field(default_factory=dict)
    sensor_window: Any = None
    sample_rate: Any = None
    config_ref: str | None = None


@dataclass(frozen=True)
class GuardVerdict:
    guard_name: str
    passed: bool
    error_code: ErrorCode | None = None
    attribute: str | None = None
    expected: Scalar = None
    actual: Scalar = None
    threshold: float | None = None
    model_confidence: float | None = None
    # scores and diagnostics for the request log; not part of the error payload
    metrics: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        error_fields = (self.error_code, self.attribute, self.expected, self.actual,
                        self.threshold, self.model_confidence)
        if self.passed and any(v is not None for v in error_fields):
            raise ValueError("a passing verdict carries no error fields")
        if not self.passed and (self.error_code is None or not self.attribute):
            raise ValueError("a failing verdict names an error code and attribute")

    @classmethod
    def ok(cls, guard_name: str, **metrics) -> "GuardVerdict":
        return cls(guard_name, True, metrics=metrics)

    @classmethod
    def bad_input(cls, guard_name: str, attribute: str, expected: Scalar, actual: Scalar,
                  **metrics) -> "GuardVerdict":
        return cls(guard_name, False, ErrorCode.INVALID_ATTRIBUTE_TYPE, attribute,
                   expected=expected, actual=actual, metrics=metrics)

    @classmethod
    def rejected(cls, guard_name: str, code: ErrorCode, attribute: str, threshold: float,
                 model_confidence: float, metrics: dict | None = None) -> "GuardVerdict":
        return cls(guard_name, False, code, attribute, threshold=threshold,
                   model_confidence=model_confidence, metrics=dict(metrics or {}))


@dataclass(frozen=True)
class InputSpec:
    window_length: int = 128
    channels: int = 3
    value_range: tuple[float, float] = (-1000.0, 1000.0)
    required_attributes: tuple[tuple[str, str], ...] = ()
    sample_rate: float | None = None
    text_max_len: int | None = None
    allowed_languages: tuple[str, ...] | None = None

    def __post_init__(self):
        lo, hi = self.value_range
        if self.window_length < 1 or self.channels < 1:
            raise ValueError("window_length and channels must be at least 1")
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError("value_range needs finite min < max")
        names = [n for n, _ in self.required_attributes]
        if len(set(names)) != len(names):
            raise ValueError("required attribute names must be unique")
        if self.text_max_len is not None and self.text_max_len < 1:
            raise ValueError("text_max_len must be positive")


@dataclass(frozen=True)
class GuardConfig:
    input_spec: InputSpec = field(default_factory=InputSpec)
    enabled: Mapping[str, bool] = field(default_factory=dict)
    ood_method: str = "msp"
    ood_threshold: float = 0.5
    ood_temperature: float = 1.0
    adv_noise_scale: float = 0.05
    adv_samples: int = 32
    adv_flip_threshold: float = 0.4
    explain_baseline: tuple[float, ...] | None = None
    explain_top_k: int = 3
    random_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "enabled", MappingProxyType(dict(self.enabled)))
        if self.explain_baseline is not None:
            object.__setattr__(self, "explain_baseline", tuple(float(v) for v in self.explain_baseline))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.ood_method not in OOD_METHODS:
            out.append(f"ood_method must be one of {OOD_METHODS}")
        if not math.isfinite(self.ood_threshold):
            out.append("ood_threshold must be finite")
        if not (math.isfinite(self.ood_temperature) and self.ood_temperature > 0):
            out.append("ood_temperature must be > 0")
        if not (math.isfinite(self.adv_noise_scale) and self.adv_noise_scale >= 0):
            out.append("adv_noise_scale must be >= 0")
        if self.adv_samples < 8:
            out.append("adv_samples must be >= 8")
        if not 0.0 <= self.adv_flip_threshold <= 1.0:
            out.append("adv_flip_threshold must lie in [0, 1]")
        if self.explain_top_k < 1:
            out.append("explain_top_k must be >= 1")
        if self.explain_baseline is not None and not all(map(math.isfinite, self.explain_baseline)):
            out.append("explain_baseline must be finite")
        return out

    def is_enabled(self, name: str) -> bool:
        return bool(self.enabled.get(name, True))

    def baseline_for(self, model) -> np.ndarray:
        if self.explain_baseline is None:
            return model.baseline
        baseline = np.asarray(self.explain_baseline, dtype=float)
        if baseline.size != model.input_dim:
            raise ValueError(f"explain_baseline has {baseline.size} entries, model takes {model.input_dim}")
        return baseline
