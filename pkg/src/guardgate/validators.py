"""Input-validation guard.

Checks run in the order the fields are declared on ``InputSpec``
(window_length, channels, value_range, required_attributes, sample_rate,
text), and the first failing check is reported. Malformed numbers (NaN,
infinities, non-numeric entries) are validation failures, never OOD events.
"""

from __future__ import annotations

import math

from .core import GuardVerdict, InferenceRequest, InputSpec
from .langid import detect_language

GUARD_NAME = "input-validator"

_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
}
SEMANTIC_TYPES = tuple(_TYPE_CHECKS)


def _type_name(v) -> str:
    if v is None:
        return "null"
    for name in ("boolean", "integer", "number", "string"):
        if _TYPE_CHECKS[name](v):
            return name
    return "array" if isinstance(v, list) else "object" if isinstance(v, dict) else type(v).__name__


def _fail(attribute, expected, actual) -> GuardVerdict:
    return GuardVerdict.bad_input(GUARD_NAME, attribute, expected, actual)


def _check_window(window, spec: InputSpec) -> GuardVerdict | None:
    if not isinstance(window, list) or not all(isinstance(row, list) for row in window):
        return _fail("sensor_window", "array of samples", _type_name(window))
    if len(window) != spec.window_length:
        return _fail("window_length", spec.window_length, len(window))
    for row in window:
        if len(row) != spec.channels:
            return _fail("channels", spec.channels, len(row))
    for row in window:
        for v in row:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                return _fail("sensor_window", "finite numbers", _type_name(v))
            if not math.isfinite(v):
                return _fail("sensor_window", "finite numbers", str(v))
    lo, hi = spec.value_range
    for row in window:
        for v in row:
            if not lo <= v <= hi:
                return _fail("sensor_window", f"values within [{lo:g}, {hi:g}]", v)
    return None


def validate(request: InferenceRequest, spec: InputSpec) -> GuardVerdict:
    window_problem = _check_window(request.sensor_window, spec)
    if window_problem is not None:
        return window_problem
    attrs = request.attributes
    for name, semantic in spec.required_attributes:
        if name not in attrs:
            return _fail(name, semantic, "missing")
        if not _TYPE_CHECKS[semantic](attrs[name]):
            return _fail(name, semantic, _type_name(attrs[name]))
    if spec.sample_rate is not None:
        rate = request.sample_rate
        if isinstance(rate, bool) or not isinstance(rate, (int, float)) or rate != spec.sample_rate:
            return _fail("sample_rate", spec.sample_rate, rate if _is_jsonable_scalar(rate) else _type_name(rate))
    if spec.text_max_len is not None and "text" in attrs:
        text = attrs["text"]
        if not isinstance(text, str):
            return _fail("text", "string", _type_name(text))
        verdict = validate_text(text, spec)
        if not verdict.passed:
            return verdict
    return GuardVerdict.ok(GUARD_NAME)


def _is_jsonable_scalar(v) -> bool:
    return v is None or isinstance(v, (str, int, float)) and not isinstance(v, bool)


def validate_text(text: str, spec: InputSpec) -> GuardVerdict:
    if spec.text_max_len is None:
        raise ValueError("validate_text needs spec.text_max_len")
    if not text:
        return _fail("text", "non-empty", "")
    if len(text) > spec.text_max_len:
        return _fail("text", f"≤{spec.text_max_len}", str(len(text)))
    if spec.allowed_languages:
        lang, confidence = detect_language(text)
        if lang not in spec.allowed_languages:
            return _fail("language", "|".join(spec.allowed_languages), lang)
        return GuardVerdict.ok(GUARD_NAME, language=lang, language_confidence=confidence)
    return GuardVerdict.ok(GUARD_NAME)
