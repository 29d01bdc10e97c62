"""Exact Shapley attributions with baseline-substitution masking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import GuardVerdict
from .model import softmax

MAX_EXACT_FEATURES = 16


@dataclass(frozen=True)
class Attribution:
    feature_names: tuple[str, ...]
    phi: tuple[float, ...]
    baseline_output: float
    actual_output: float

    @property
    def total(self) -> float:
        return math.fsum(self.phi)


def coalition_inputs(x: np.ndarray, baseline: np.ndarray) -> np.ndarray:
    """Row ``m`` takes feature ``i`` from ``x`` when bit ``i`` of ``m`` is set."""
    d = x.size
    masks = np.arange(1 << d)
    bits = ((masks[:, None] >> np.arange(d)) & 1).astype(bool)
    return np.where(bits, x, baseline)


def shapley_exact(model_fn: Callable[[np.ndarray], np.ndarray], x, baseline,
                  feature_names: Sequence[str] | None = None) -> Attribution:
    """Shapley values of ``model_fn`` at ``x`` relative to ``baseline``.

    ``model_fn`` maps a ``(n, d)`` array to ``n`` outputs; it is called once
    on all ``2**d`` coalitions.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    baseline = np.asarray(baseline, dtype=float).reshape(-1)
    d = x.size
    if baseline.size != d:
        raise ValueError(f"baseline has {baseline.size} features, x has {d}")
    if d > MAX_EXACT_FEATURES:
        raise ValueError(f"exact enumeration supports at most {MAX_EXACT_FEATURES} features, got {d}")
    if d == 0:
        raise ValueError("need at least one feature")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(d))
    if len(names) != d:
        raise ValueError("feature_names length differs from feature count")

    values = np.asarray(model_fn(coalition_inputs(x, baseline)), dtype=float).reshape(-1)
    if values.size != 1 << d:
        raise ValueError("model_fn must return one output per coalition row")
    masks = np.arange(1 << d)
    sizes = np.array([bin(m).count("1") for m in masks])
    # weight for a coalition of size s that excludes the feature: s! (d-s-1)! / d!
    weight = np.array([1.0 / (d * math.comb(d - 1, s)) for s in range(d)])
    phi = np.empty(d)
    for i in range(d):
        without = masks[(masks & (1 << i)) == 0]
        phi[i] = np.dot(weight[sizes[without]], values[without | (1 << i)] - values[without])
    return Attribution(names, tuple(float(p) for p in phi), float(values[0]), float(values[-1]))


def explain_prediction(model, features, predicted_class: int, baseline) -> Attribution:
    """Attribute the predicted-class probability to the model's input features."""

    def class_probability(batch):
        return softmax(model.logits(batch))[:, predicted_class]

    return shapley_exact(class_probability, features, baseline, model.feature_names)


def render_text(attr: Attribution, top_k: int = 3) -> str:
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    ranked = sorted(zip(attr.feature_names, attr.phi), key=lambda p: (-abs(p[1]), p[0]))
    parts = [f"{name} ({value:+.2f})" for name, value in ranked[:top_k]]
    return "Decision driven by: " + ", ".join(parts)


def check(model, features, predicted_class: int, config, guard_name: str = "explainer"):
    """Run the explainer; returns the verdict and the rendered text (empty when disabled)."""
    if not config.is_enabled(guard_name):
        return GuardVerdict.ok(guard_name, skipped=True), ""
    attr = explain_prediction(model, features, predicted_class, config.baseline_for(model))
    verdict = GuardVerdict.ok(guard_name, efficiency_gap=attr.total - (attr.actual_output - attr.baseline_output))
    return verdict, render_text(attr, config.explain_top_k)
