"""Wire-level response schema: success, bad-request and internal-error bodies.

Bodies are immutable and validate their invariants on construction, so any
value that exists can be serialized. The encoding is UTF-8 JSON with a fixed
key order; ``data`` nests the per-row data attributes.
"""

from __future__ import annotations

import enum
import json
import math
import re
import uuid
from dataclasses import dataclass
from typing import Union

Scalar = Union[str, int, float, None]

SUCCESS_MESSAGE = "Success"
BAD_REQUEST_TEMPLATE = (
    'The server encounters difficulties processing the input for the specified "{attribute}". '
    "The provided data does not meet the expected format or requirements, leading to a "
    "processing error on the server side."
)
INTERNAL_ERROR_MESSAGE = (
    "The server detected a problem with the provided input. The provided input distribution "
    "does not meet the requirements, leading to a processing error on the server side."
)
MODEL_SERVING_FAILURE_MESSAGE = (
    "The server could not obtain a prediction from the model. "
    "The failure is in the serving path, not in the provided input."
)

SOURCES = frozenset(
    {"input-validator", "adversarial-guard", "ood-guard", "model", "explainer", "gateway"}
)

_ID_RE = re.compile(r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$")


class ErrorCode(str, enum.Enum):
    INVALID_ATTRIBUTE_TYPE = "INVALID_ATTRIBUTE_TYPE"
    OUT_OF_DISTRIBUTION = "OUT_OF_DISTRIBUTION"
    ADVERSARIAL_ATTACK_DETECTED = "ADVERSARIAL_ATTACK_DETECTED"
    # gateway extension, never produced by a guard
    MODEL_SERVING_FAILURE = "MODEL_SERVING_FAILURE"


class ErrorType(str, enum.Enum):
    BAD_REQUEST = "BadRequest"
    INTERNAL_SERVER_ERROR = "InternalServerError"


GUARD_500_CODES = frozenset({ErrorCode.OUT_OF_DISTRIBUTION, ErrorCode.ADVERSARIAL_ATTACK_DETECTED})


class ProtocolError(ValueError):
    """A body would violate the response schema."""


def new_id() -> str:
    """Fresh random 128-bit identifier in canonical 8-4-4-4-12 form."""
    return str(uuid.uuid4())


def is_response_id(value: object) -> bool:
    return isinstance(value, str) and _ID_RE.match(value) is not None


def _is_scalar(v) -> bool:
    if v is None or isinstance(v, str):
        return True
    if isinstance(v, bool):
        return False
    return isinstance(v, int) or (isinstance(v, float) and math.isfinite(v))


@dataclass(frozen=True)
class SuccessBody:
    data_class: tuple[str, ...]
    data_confidence: tuple[float, ...]
    explainability: str
    source: str = "model"
    message: str = SUCCESS_MESSAGE
    status_code: int = 200

    def __post_init__(self):
        if self.message != SUCCESS_MESSAGE or self.status_code != 200:
            raise ProtocolError("success bodies carry message 'Success' and status 200")
        if not self.data_class or len(self.data_class) != len(self.data_confidence):
            raise ProtocolError("data_class and data_confidence must be non-empty and equal length")
        for c in self.data_confidence:
            if not (isinstance(c, float) and 0.0 <= c <= 1.0):
                raise ProtocolError(f"confidence {c!r} outside [0, 1]")
        if sum(self.data_confidence) > 1.0 + 1e-6:
            raise ProtocolError("confidences sum above 1")
        if self.source not in SOURCES:
            raise ProtocolError(f"unknown source {self.source!r}")
        if not isinstance(self.explainability, str):
            raise ProtocolError("explainability must be a string")


@dataclass(frozen=True)
class ErrorBody:
    message: str
    status_code: int
    error_code: ErrorCode
    type: ErrorType
    source: str
    data_attribute: str
    request_id: str
    error_id: str
    data_expected_value: Scalar = None
    data_value: Scalar = None
    data_threshold: float | None = None
    data_model_confidence: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "error_code", ErrorCode(self.error_code))
        object.__setattr__(self, "type", ErrorType(self.type))
        if self.status_code == 400:
            if self.type is not ErrorType.BAD_REQUEST or self.error_code is not ErrorCode.INVALID_ATTRIBUTE_TYPE:
                raise ProtocolError("400 bodies are BadRequest / INVALID_ATTRIBUTE_TYPE")
            if self.data_threshold is not None or self.data_model_confidence is not None:
                raise ProtocolError("400 bodies carry no threshold or model confidence")
        elif self.status_code == 500:
            if self.type is not ErrorType.INTERNAL_SERVER_ERROR or self.error_code is ErrorCode.INVALID_ATTRIBUTE_TYPE:
                raise ProtocolError("500 bodies are InternalServerError with a 500-class code")
            if self.error_code in GUARD_500_CODES:
                for name in ("data_threshold", "data_model_confidence"):
                    v = getattr(self, name)
                    if not (isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)):
                        raise ProtocolError(f"{name} must be a finite number")
                if not 0.0 <= self.data_model_confidence <= 1.0:
                    raise ProtocolError("model confidence outside [0, 1]")
                if self.data_expected_value is not None or self.data_value is not None:
                    raise ProtocolError("guard 500 bodies carry no expected/actual values")
        else:
            raise ProtocolError(f"status_code {self.status_code} is not 400 or 500")
        if not self.data_attribute:
            raise ProtocolError("data_attribute must be non-empty")
        if not (self.request_id and self.error_id) or self.request_id == self.error_id:
            raise ProtocolError("request_id and error_id must be non-empty and distinct")
        if not (_is_scalar(self.data_expected_value) and _is_scalar(self.data_value)):
            raise ProtocolError("expected/actual values must be scalars or strings")
        if self.source not in SOURCES:
            raise ProtocolError(f"unknown source {self.source!r}")


ProtocolResponse = Union[SuccessBody, ErrorBody]


def build_success(prediction, explanation: str, source: str = "model") -> SuccessBody:
    """Success body with classes ranked by descending confidence (ties by label)."""
    pairs = sorted(zip(prediction.classes, prediction.confidences), key=lambda p: (-p[1], p[0]))
    return SuccessBody(
        data_class=tuple(c for c, _ in pairs),
        data_confidence=tuple(float(p) for _, p in pairs),
        explainability=explanation,
        source=source,
    )


def build_bad_request(attribute: str, expected: Scalar, actual: Scalar, source: str,
                      request_id: str) -> ErrorBody:
    if not attribute:
        raise ProtocolError("attribute must be non-empty")
    return ErrorBody(
        message=BAD_REQUEST_TEMPLATE.format(attribute=attribute),
        status_code=400,
        error_code=ErrorCode.INVALID_ATTRIBUTE_TYPE,
        type=ErrorType.BAD_REQUEST,
        source=source,
        data_attribute=attribute,
        data_expected_value=expected,
        data_value=actual,
        request_id=request_id,
        error_id=new_id(),
    )


def build_internal_error(code: ErrorCode | str, attribute: str, threshold: float,
                         model_confidence: float, source: str, request_id: str) -> ErrorBody:
    code = ErrorCode(code)
    if code not in GUARD_500_CODES:
        raise ProtocolError(f"{code.value} is not an internal-error code")
    return ErrorBody(
        message=INTERNAL_ERROR_MESSAGE,
        status_code=500,
        error_code=code,
        type=ErrorType.INTERNAL_SERVER_ERROR,
        source=source,
        data_attribute=attribute,
        data_threshold=float(threshold),
        data_model_confidence=float(model_confidence),
        request_id=request_id,
        error_id=new_id(),
    )


def build_serving_failure(attribute: str, expected: Scalar, actual: Scalar,
                           request_id: str) -> ErrorBody:
    """Gateway extension: the serving path failed (upstream unreachable, bad payload, crash)."""
    return ErrorBody(
        message=MODEL_SERVING_FAILURE_MESSAGE,
        status_code=500,
        error_code=ErrorCode.MODEL_SERVING_FAILURE,
        type=ErrorType.INTERNAL_SERVER_ERROR,
        source="gateway",
        data_attribute=attribute,
        data_expected_value=expected,
        data_value=actual,
        request_id=request_id,
        error_id=new_id(),
    )


# -- encoding ------------------------------------------------------------------


def to_document(body: ProtocolResponse) -> dict:
    if isinstance(body, SuccessBody):
        return {
            "message": body.message,
            "status_code": body.status_code,
            "data": {"class": list(body.data_class), "confidence": list(body.data_confidence)},
            "explainability": body.explainability,
            "source": body.source,
        }
    if body.status_code == 400:
        data = {
            "attribute": body.data_attribute,
            "expected_value": body.data_expected_value,
            "value": body.data_value,
        }
    else:
        data = {
            "attribute": body.data_attribute,
            "threshold": body.data_threshold,
            "model_confidence": body.data_model_confidence,
        }
        if body.error_code is ErrorCode.MODEL_SERVING_FAILURE:
            data["expected_value"] = body.data_expected_value
            data["value"] = body.data_value
    return {
        "message": body.message,
        "status_code": body.status_code,
        "error_code": body.error_code.value,
        "type": body.type.value,
        "source": body.source,
        "data": data,
        "request-id": body.request_id,
        "error-id": body.error_id,
    }


def _dump(doc: dict) -> bytes:
    return (json.dumps(doc, ensure_ascii=False, indent=2, allow_nan=False) + "\n").encode("utf-8")


def serialize(body: ProtocolResponse) -> bytes:
    return _dump(to_document(body))


def from_document(doc: dict) -> ProtocolResponse:
    try:
        data = doc["data"]
        if doc["status_code"] == 200:
            expected = {"message", "status_code", "data", "explainability", "source"}
            if set(doc) != expected or set(data) != {"class", "confidence"}:
                raise ProtocolError("success document keys differ from the schema")
            return SuccessBody(
                data_class=tuple(data["class"]),
                data_confidence=tuple(float(c) for c in data["confidence"]),
                explainability=doc["explainability"],
                source=doc["source"],
                message=doc["message"],
                status_code=doc["status_code"],
            )
        return ErrorBody(
            message=doc["message"],
            status_code=doc["status_code"],
            error_code=doc["error_code"],
            type=doc["type"],
            source=doc["source"],
            data_attribute=data["attribute"],
            data_expected_value=data.get("expected_value"),
            data_value=data.get("value"),
            data_threshold=data.get("threshold"),
            data_model_confidence=data.get("model_confidence"),
            request_id=doc["request-id"],
            error_id=doc["error-id"],
        )
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed response document: {exc!r}") from None


def parse(raw: bytes | str) -> ProtocolResponse:
    return from_document(json.loads(raw))


# -- JSON Schemas for clients and contract tests --------------------------------

_ID_SCHEMA = {"type": "string", "pattern": _ID_RE.pattern}
_SCALAR = {"type": ["string", "number", "integer", "null"]}
_SOURCE = {"enum": sorted(SOURCES)}

SUCCESS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["message", "status_code", "data", "explainability", "source"],
    "properties": {
        "message": {"const": SUCCESS_MESSAGE},
        "status_code": {"const": 200},
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["class", "confidence"],
            "properties": {
                "class": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                "confidence": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        },
        "explainability": {"type": "string"},
        "source": _SOURCE,
    },
}

BAD_REQUEST_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["message", "status_code", "error_code", "type", "source", "data",
                 "request-id", "error-id"],
    "properties": {
        "message": {"type": "string", "pattern": "^The server encounters difficulties"},
        "status_code": {"const": 400},
        "error_code": {"const": "INVALID_ATTRIBUTE_TYPE"},
        "type": {"const": "BadRequest"},
        "source": _SOURCE,
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["attribute", "expected_value", "value"],
            "properties": {
                "attribute": {"type": "string", "minLength": 1},
                "expected_value": _SCALAR,
                "value": _SCALAR,
            },
        },
        "request-id": _ID_SCHEMA,
        "error-id": _ID_SCHEMA,
    },
}

INTERNAL_ERROR_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["message", "status_code", "error_code", "type", "source", "data",
                 "request-id", "error-id"],
    "properties": {
        "message": {"const": INTERNAL_ERROR_MESSAGE},
        "status_code": {"const": 500},
        "error_code": {"enum": ["OUT_OF_DISTRIBUTION", "ADVERSARIAL_ATTACK_DETECTED"]},
        "type": {"const": "InternalServerError"},
        "source": _SOURCE,
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["attribute", "threshold", "model_confidence"],
            "properties": {
                "attribute": {"type": "string", "minLength": 1},
                "threshold": {"type": "number"},
                "model_confidence": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "request-id": _ID_SCHEMA,
        "error-id": _ID_SCHEMA,
    },
}

# 500 row plus the declared extension keys expected_value / value
MODEL_SERVING_FAILURE_SCHEMA = {
    **INTERNAL_ERROR_SCHEMA,
    "properties": {
        **INTERNAL_ERROR_SCHEMA["properties"],
        "message": {"const": MODEL_SERVING_FAILURE_MESSAGE},
        "error_code": {"const": "MODEL_SERVING_FAILURE"},
        "source": {"const": "gateway"},
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["attribute", "threshold", "model_confidence", "expected_value", "value"],
            "properties": {
                "attribute": {"type": "string", "minLength": 1},
                "threshold": {"type": "null"},
                "model_confidence": {"type": "null"},
                "expected_value": _SCALAR,
                "value": _SCALAR,
            },
        },
    },
}

EXTENSION_KEYS = {"MODEL_SERVING_FAILURE": ("expected_value", "value")}


def schema_for(doc: dict) -> dict:
    """Pick the row schema a response document must satisfy."""
    status = doc.get("status_code")
    if status == 200:
        return SUCCESS_SCHEMA
    if status == 400:
        return BAD_REQUEST_SCHEMA
    if doc.get("error_code") == ErrorCode.MODEL_SERVING_FAILURE.value:
        return MODEL_SERVING_FAILURE_SCHEMA
    return INTERNAL_ERROR_SCHEMA
