"""Ordered guard execution in front of a model.

Stages run by position: input validation (100), adversarial detection (200),
OOD detection (300), inference (400, always on) and explainability (500).
Custom guards slot in at any other position. The first failing guard decides
the response and nothing after it runs.
"""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import adversarial, explainer, ood, validators
from .core import BUILTIN_GUARDS, GuardConfig, GuardVerdict, InferenceRequest
from .model import Model, Prediction, SensorWindow, UpstreamError, extract_features, prediction_from_logits
from .protocol import (
    SOURCES,
    ErrorCode,
    ProtocolResponse,
    build_bad_request,
    build_internal_error,
    build_success,
    build_serving_failure,
    new_id,
)

INFERENCE_STAGE = "model"
INFERENCE_POSITION = 400


class Guard(Protocol):
    source: str

    def check(self, ctx: "RequestContext") -> GuardVerdict: ...


class FeatureError(ValueError):
    """The sensor window cannot be turned into model features."""


class RequestContext:
    """Per-request state; features and logits are computed at most once."""

    def __init__(self, request: InferenceRequest, config: GuardConfig, model: Model):
        self.request = request
        self.config = config
        self.model = model
        self._features = None
        self._logits = None
        self.prediction: Prediction | None = None
        self.explanation = ""

    @property
    def features(self) -> np.ndarray:
        if self._features is None:
            try:
                window = SensorWindow(np.asarray(self.request.sensor_window, dtype=float),
                                      float(self.request.sample_rate or 0.0))
                self._features = extract_features(window, self.model)
            except (TypeError, ValueError) as exc:
                raise FeatureError(str(exc)) from None
        return self._features

    @property
    def logits(self) -> np.ndarray:
        if self._logits is None:
            self._logits = self.model.logits(self.features[None, :])[0]
        return self._logits

    @property
    def predicted_index(self) -> int:
        return self.model.class_labels.index(self.prediction.classes[0])


class InputValidationGuard:
    source = "input-validator"

    def check(self, ctx):
        return validators.validate(ctx.request, ctx.config.input_spec)


class AdversarialGuard:
    source = "adversarial-guard"

    def check(self, ctx):
        return adversarial.check(ctx.features, ctx.model, ctx.config, base_logits=ctx.logits)


class OODGuard:
    source = "ood-guard"

    def check(self, ctx):
        return ood.check(ctx.logits, ctx.config)


class ExplainerGuard:
    source = "explainer"

    def check(self, ctx):
        verdict, ctx.explanation = explainer.check(ctx.model, ctx.features, ctx.predicted_index, ctx.config)
        return verdict


@dataclass(frozen=True)
class _Entry:
    position: int
    name: str
    guard: Guard


@dataclass
class PipelineResult:
    response: ProtocolResponse
    stages: list[str] = field(default_factory=list)
    verdicts: list[GuardVerdict] = field(default_factory=list)
    failed: GuardVerdict | None = None


class GuardPipeline:
    def __init__(self, config: GuardConfig, model: Model, extra_guards=()):
        self.model = model
        self._entries: list[_Entry] = [
            _Entry(100, "input-validator", InputValidationGuard()),
            _Entry(200, "adversarial-guard", AdversarialGuard()),
            _Entry(300, "ood-guard", OODGuard()),
            _Entry(500, "explainer", ExplainerGuard()),
        ]
        for name, guard, position in extra_guards:
            self.register_guard(name, guard, position)
        self._lock = threading.Lock()
        self.invocations: Counter = Counter()
        self.config = self._checked(config)

    def _checked(self, config: GuardConfig) -> GuardConfig:
        unknown = sorted(set(config.enabled) - set(self.guard_names))
        if unknown:
            raise ValueError(f"config enables unknown guards: {', '.join(unknown)}")
        return config

    def replace_config(self, config: GuardConfig) -> None:
        """Swap the whole config; requests already running keep the old one."""
        self.config = self._checked(config)

    @property
    def guard_names(self) -> list[str]:
        return [e.name for e in self._entries]

    def stage_order(self) -> list[str]:
        """All stages in execution order, inference included."""
        names = [(e.position, e.name) for e in self._entries]
        names.append((INFERENCE_POSITION, INFERENCE_STAGE))
        return [n for _, n in sorted(names, key=lambda p: p[0])]

    def register_guard(self, name: str, guard: Guard, position: int) -> None:
        if name == INFERENCE_STAGE or name in self.guard_names:
            raise ValueError(f"guard name {name!r} is already registered")
        if position == INFERENCE_POSITION:
            raise ValueError(f"position {INFERENCE_POSITION} is reserved for inference")
        self._entries.append(_Entry(position, name, guard))
        # stable sort keeps registration order among equal positions
        self._entries.sort(key=lambda e: e.position)

    def _record(self, stage: str, stages: list[str]) -> None:
        stages.append(stage)
        with self._lock:
            self.invocations[stage] += 1

    def execute(self, request: InferenceRequest, request_id: str | None = None) -> PipelineResult:
        config = self.config
        request_id = request_id or new_id()
        ctx = RequestContext(request, config, self.model)
        result = PipelineResult(response=None)  # type: ignore[arg-type]
        pending_inference = True
        try:
            for entry in list(self._entries):
                if pending_inference and entry.position > INFERENCE_POSITION:
                    self._infer(ctx, result)
                    pending_inference = False
                if not config.is_enabled(entry.name):
                    continue
                self._record(entry.name, result.stages)
                verdict = entry.guard.check(ctx)
                result.verdicts.append(verdict)
                if not verdict.passed:
                    result.failed = verdict
                    result.response = _error_response(verdict, entry.guard, request_id)
                    return result
            if pending_inference:
                self._infer(ctx, result)
        except UpstreamError as exc:
            result.response = build_serving_failure(exc.attribute, exc.expected, exc.value, request_id)
            return result
        except FeatureError as exc:
            # only reachable with input validation disabled
            result.response = build_bad_request("sensor_window", "numeric window matching model input",
                                                str(exc), "gateway", request_id)
            return result
        result.response = build_success(ctx.prediction, ctx.explanation)
        return result

    def _infer(self, ctx: RequestContext, result: PipelineResult) -> None:
        self._record(INFERENCE_STAGE, result.stages)
        ctx.prediction = prediction_from_logits(ctx.logits, ctx.model.class_labels)


def _error_response(verdict: GuardVerdict, guard: Guard, request_id: str) -> ProtocolResponse:
    source = getattr(guard, "source", "gateway")
    if source not in SOURCES:
        source = "gateway"
    if verdict.error_code is ErrorCode.INVALID_ATTRIBUTE_TYPE:
        return build_bad_request(verdict.attribute, verdict.expected, verdict.actual, source, request_id)
    return build_internal_error(verdict.error_code, verdict.attribute, verdict.threshold,
                                verdict.model_confidence, source, request_id)


def execute(request: InferenceRequest, config: GuardConfig, model: Model) -> ProtocolResponse:
    """One-shot convenience over ``GuardPipeline``."""
    return GuardPipeline(config, model).execute(request).response


__all__ = ["BUILTIN_GUARDS", "GuardPipeline", "PipelineResult", "RequestContext", "execute"]
