"""Model runtime: featurization, the builtin dense network and the remote client.

Models work in standardized feature space. ``extract_features`` turns a raw
sensor window into the 12 per-axis statistics and standardizes them with the
statistics stored alongside the model, so validators, explainer and model all
share one definition of a feature vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import httpx
import numpy as np

ACTIVITY_LABELS = ("downstairs", "jogging", "sitting", "standing", "upstairs", "walking")
AXES = ("x", "y", "z")
STATISTICS = ("mean", "std", "min", "max")
FEATURE_NAMES = tuple(f"{axis}_{stat}" for axis in AXES for stat in STATISTICS)

MODEL_FILE_MAGIC = "guardgate-model 1"


class ModelFormatError(ValueError):
    """Weights file could not be parsed or violates the model invariants."""


class UpstreamError(RuntimeError):
    """A remote model call failed or returned an unusable payload."""

    def __init__(self, message: str, attribute: str = "logits", expected=None, value=None):
        super().__init__(message)
        self.attribute = attribute
        self.expected = expected
        self.value = value


@dataclass(frozen=True)
class SensorWindow:
    samples: np.ndarray
    sample_rate: float = 20.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise ValueError(f"sensor window must be 2-D, got shape {samples.shape}")
        if not np.isfinite(samples).all():
            raise ValueError("sensor window contains non-finite readings")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class Prediction:
    classes: tuple[str, ...]
    confidences: tuple[float, ...]
    logits: tuple[float, ...]

    @property
    def top_confidence(self) -> float:
        return self.confidences[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def window_statistics(samples: np.ndarray) -> np.ndarray:
    """Per-axis mean, std, min and max, axis-major (x_mean, x_std, ...)."""
    samples = np.asarray(samples, dtype=float)
    # std is shift-invariant; centring on the first row keeps constant axes at exactly 0
    spread = (samples - samples[:1]).std(axis=0)
    stats = np.stack(
        [samples.mean(axis=0), spread, samples.min(axis=0), samples.max(axis=0)],
        axis=1,
    )
    return stats.reshape(-1)


class Model:
    """Common surface of builtin and remote models.

    ``logits`` takes a ``(n, input_dim)`` batch of standardized features and
    returns ``(n, n_classes)`` raw scores.
    """

    kind = "abstract"

    def __init__(self, labels: Sequence[str], feature_means, feature_stds,
                 feature_names: Sequence[str] = FEATURE_NAMES):
        self.class_labels = tuple(labels)
        self.feature_names = tuple(feature_names)
        self.feature_means = np.asarray(feature_means, dtype=float)
        self.feature_stds = np.asarray(feature_stds, dtype=float)
        if self.feature_means.shape != self.feature_stds.shape:
            raise ValueError("feature_means and feature_stds differ in length")
        if len(self.feature_names) != self.feature_means.size:
            raise ValueError("feature_names do not match the feature dimension")
        if np.any(self.feature_stds < 0):
            raise ValueError("feature_stds must be non-negative")

    @property
    def input_dim(self) -> int:
        return int(self.feature_means.size)

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)

    def standardize(self, raw: np.ndarray) -> np.ndarray:
        scale = np.where(self.feature_stds > 0, self.feature_stds, 1.0)
        return (np.asarray(raw, dtype=float) - self.feature_means) / scale

    @property
    def baseline(self) -> np.ndarray:
        """Training-mean feature vector in standardized space."""
        return self.standardize(self.feature_means)

    def logits(self, features: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass


class DenseModel(Model):
    """Feed-forward ReLU network; the last layer is linear.

    ``layers`` is a list of ``(weights, bias)`` with weights shaped
    ``(fan_in, fan_out)``. ``input_clip``, when set, saturates standardized
    features to ``[-input_clip, input_clip]`` before the first layer.
    """

    kind = "builtin"

    def __init__(self, layers, labels, feature_means, feature_stds,
                 feature_names=FEATURE_NAMES, input_clip: float | None = None):
        super().__init__(labels, feature_means, feature_stds, feature_names)
        self.layers = []
        fan_in = self.input_dim
        for i, (w, b) in enumerate(layers):
            w = np.array(w, dtype=float)
            b = np.array(b, dtype=float)
            if w.ndim != 2 or w.shape[0] != fan_in or b.shape != (w.shape[1],):
                raise ValueError(
                    f"layer {i}: expected weights ({fan_in}, k) and bias (k,), "
                    f"got {w.shape} and {b.shape}"
                )
            w.setflags(write=False)
            b.setflags(write=False)
            self.layers.append((w, b))
            fan_in = w.shape[1]
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if fan_in != self.n_classes:
            raise ValueError(f"last layer has {fan_in} outputs for {self.n_classes} labels")
        if input_clip is not None and not input_clip > 0:
            raise ValueError("input_clip must be positive")
        self.input_clip = input_clip

    def logits(self, features: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(features, dtype=float))
        if h.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {h.shape[1]}")
        if self.input_clip is not None:
            h = np.clip(h, -self.input_clip, self.input_clip)
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h


class RemoteModel(Model):
    """Model served by an upstream HTTP endpoint.

    Featurization and the explainer baseline still need the standardization
    statistics, so a remote model is built from a model profile (the header of
    a weights file) plus the endpoint URL.
    """

    kind = "remote"

    def __init__(self, endpoint: str, labels, feature_means, feature_stds,
                 feature_names=FEATURE_NAMES, timeout: float = 2.0, max_connections: int = 16):
        super().__init__(labels, feature_means, feature_stds, feature_names)
        self.endpoint = endpoint
        self.timeout = timeout
        self._client = httpx.Client(
            timeout=httpx.Timeout(timeout),
            limits=httpx.Limits(max_connections=max_connections,
                                max_keepalive_connections=max_connections),
        )

    def logits(self, features: np.ndarray) -> np.ndarray:
        batch = np.atleast_2d(np.asarray(features, dtype=float))
        return infer_remote_batch(self.endpoint, batch, self.timeout,
                                  n_classes=self.n_classes, client=self._client)

    def close(self) -> None:
        self._client.close()


def extract_features(window: SensorWindow | np.ndarray, model: Model) -> np.ndarray:
    """Standardized 12-feature vector for ``window``."""
    samples = window.samples if isinstance(window, SensorWindow) else np.asarray(window, dtype=float)
    if samples.ndim != 2 or samples.shape[1] * len(STATISTICS) != model.input_dim:
        raise ValueError(
            f"window shape {samples.shape} does not produce {model.input_dim} features"
        )
    return model.standardize(window_statistics(samples))


def prediction_from_logits(logits, labels: Sequence[str]) -> Prediction:
    logits = np.asarray(logits, dtype=float).reshape(-1)
    if logits.size != len(labels):
        raise ValueError(f"got {logits.size} logits for {len(labels)} labels")
    probs = softmax(logits)
    # descending confidence, ties broken by label
    order = sorted(range(len(labels)), key=lambda i: (-probs[i], labels[i]))
    return Prediction(
        classes=tuple(labels[i] for i in order),
        confidences=tuple(float(probs[i]) for i in order),
        logits=tuple(float(v) for v in logits),
    )


def predict(model: Model, features) -> Prediction:
    features = np.asarray(features, dtype=float).reshape(-1)
    if features.size != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got {features.size}")
    return prediction_from_logits(model.logits(features[None, :])[0], model.class_labels)


def _check_logit_row(row, n_classes: int) -> list[float]:
    if not isinstance(row, list):
        raise UpstreamError("upstream logits are not an array", expected=n_classes, value=type(row).__name__)
    if len(row) != n_classes:
        raise UpstreamError(f"upstream returned {len(row)} logits, expected {n_classes}",
                            expected=n_classes, value=len(row))
    out = []
    for v in row:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise UpstreamError("upstream logits must be finite numbers",
                                expected="finite numbers", value=repr(v))
        out.append(float(v))
    return out


@lru_cache(maxsize=1)
def _shared_client() -> httpx.Client:
    # building a client is expensive (tens of ms); reuse one for ad-hoc calls
    return httpx.Client()


def _post(endpoint: str, payload, timeout: float, client: httpx.Client | None):
    client = client or _shared_client()
    try:
        resp = client.post(endpoint, json=payload, timeout=timeout)
    except httpx.TimeoutException as exc:
        raise UpstreamError(f"upstream timed out after {timeout:g}s",
                            attribute="upstream", expected=f"response within {timeout:g}s",
                            value="timeout") from exc
    except httpx.TransportError as exc:
        raise UpstreamError(f"upstream unreachable: {exc}", attribute="upstream",
                            expected="reachable endpoint", value="connection failure") from exc
    if resp.status_code != 200:
        raise UpstreamError(f"upstream answered HTTP {resp.status_code}", attribute="upstream",
                            expected=200, value=resp.status_code)
    try:
        return resp.json()
    except ValueError as exc:
        raise UpstreamError("upstream payload is not valid JSON", expected="logit array",
                            value="unparseable") from exc


def infer_remote(endpoint: str, features, timeout: float, n_classes: int = 6,
                 client: httpx.Client | None = None) -> np.ndarray:
    """POST one flat feature array; the upstream answers with a flat logit array."""
    payload = [float(v) for v in np.asarray(features, dtype=float).reshape(-1)]
    return np.asarray(_check_logit_row(_post(endpoint, payload, timeout, client), n_classes))


def infer_remote_batch(endpoint: str, features: np.ndarray, timeout: float, n_classes: int = 6,
                       client: httpx.Client | None = None) -> np.ndarray:
    """Batched variant: an array of feature arrays in, an array of logit arrays out."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[0] == 1:
        return infer_remote(endpoint, features[0], timeout, n_classes, client)[None, :]
    doc = _post(endpoint, features.tolist(), timeout, client)
    if not isinstance(doc, list) or len(doc) != features.shape[0]:
        raise UpstreamError("upstream batch size mismatch", expected=features.shape[0],
                            value=len(doc) if isinstance(doc, list) else type(doc).__name__)
    return np.asarray([_check_logit_row(row, n_classes) for row in doc])


# -- weights file --------------------------------------------------------------


@dataclass
class ModelProfile:
    labels: tuple[str, ...]
    feature_names: tuple[str, ...]
    feature_means: np.ndarray
    feature_stds: np.ndarray
    input_clip: float | None = None
    layers: list = field(default_factory=list)


class _LineReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def next(self, what: str) -> tuple[int, str]:
        while self.pos < len(self.data):
            start = self.pos
            end = self.data.find(b"\n", start)
            if end < 0:
                end = len(self.data)
            self.pos = end + 1
            line = self.data[start:end].decode("utf-8", errors="replace").strip()
            if line and not line.startswith("#"):
                return start, line
        raise ModelFormatError(f"unexpected end of file at byte {len(self.data)}: expected {what}")


def _floats(offset: int, text: str, n: int, what: str) -> np.ndarray:
    try:
        values = [float(tok) for tok in text.split()]
    except ValueError as exc:
        raise ModelFormatError(f"byte {offset}: {what}: {exc}") from None
    if len(values) != n:
        raise ModelFormatError(f"byte {offset}: {what}: expected {n} values, got {len(values)}")
    return np.asarray(values)


def _keyed(reader: _LineReader, key: str) -> tuple[int, str]:
    offset, line = reader.next(key)
    head, _, rest = line.partition(" ")
    if head != key:
        raise ModelFormatError(f"byte {offset}: expected '{key}', found '{head}'")
    return offset, rest.strip()


def read_profile(path: str | Path, header_only: bool = False) -> ModelProfile:
    data = Path(path).read_bytes()
    reader = _LineReader(data)
    offset, line = reader.next("file magic")
    if line != MODEL_FILE_MAGIC:
        raise ModelFormatError(f"byte {offset}: not a model file (expected '{MODEL_FILE_MAGIC}')")
    _, text = _keyed(reader, "labels")
    labels = tuple(text.split())
    _, text = _keyed(reader, "features")
    names = tuple(text.split())
    d = len(names)
    offset, text = _keyed(reader, "feature_means")
    means = _floats(offset, text, d, "feature_means")
    offset, text = _keyed(reader, "feature_stds")
    stds = _floats(offset, text, d, "feature_stds")
    offset, text = _keyed(reader, "input_clip")
    clip = None if text == "none" else float(_floats(offset, text, 1, "input_clip")[0])
    profile = ModelProfile(labels, names, means, stds, clip)
    if header_only:
        return profile
    offset, text = _keyed(reader, "layers")
    try:
        n_layers = int(text)
    except ValueError:
        raise ModelFormatError(f"byte {offset}: layer count '{text}' is not an integer") from None
    for i in range(n_layers):
        offset, text = _keyed(reader, "dense")
        try:
            fan_in, fan_out = (int(tok) for tok in text.split())
        except ValueError:
            raise ModelFormatError(f"byte {offset}: dense header needs two integers") from None
        rows = []
        for r in range(fan_in):
            offset, line = reader.next(f"layer {i} row {r}")
            rows.append(_floats(offset, line, fan_out, f"layer {i} row {r}"))
        offset, text = _keyed(reader, "bias")
        bias = _floats(offset, text, fan_out, f"layer {i} bias")
        profile.layers.append((np.stack(rows), bias))
    return profile


def load_model(path: str | Path) -> DenseModel:
    """Load a weights file and verify the model invariants."""
    profile = read_profile(path)
    check_labels(profile.labels)
    try:
        return DenseModel(profile.layers, profile.labels, profile.feature_means,
                          profile.feature_stds, profile.feature_names, profile.input_clip)
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from None


def load_remote_model(profile_path: str | Path, endpoint: str, timeout: float = 2.0) -> RemoteModel:
    profile = read_profile(profile_path, header_only=True)
    check_labels(profile.labels)
    return RemoteModel(endpoint, profile.labels, profile.feature_means, profile.feature_stds,
                       profile.feature_names, timeout=timeout)


def check_labels(labels: Sequence[str]) -> None:
    if tuple(labels) != ACTIVITY_LABELS:
        raise ModelFormatError(
            f"model labels {list(labels)} differ from the activity set {list(ACTIVITY_LABELS)}"
        )


def dump_model(model: DenseModel, path: str | Path) -> None:
    lines = [
        MODEL_FILE_MAGIC,
        "# dense ReLU network over standardized window statistics",
        "labels " + " ".join(model.class_labels),
        "features " + " ".join(model.feature_names),
        "feature_means " + " ".join(repr(float(v)) for v in model.feature_means),
        "feature_stds " + " ".join(repr(float(v)) for v in model.feature_stds),
        "input_clip " + ("none" if model.input_clip is None else repr(float(model.input_clip))),
        f"layers {len(model.layers)}",
    ]
    for w, b in model.layers:
        lines.append(f"dense {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append("bias " + " ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
