"""Service configuration: strict TOML parsing into immutable runtime config.

Unknown keys are errors, and every problem in a file is reported at once,
so a typo can never silently leave a guard disabled.
"""

from __future__ import annotations

import hashlib
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .core import BUILTIN_GUARDS, GuardConfig, InputSpec
from .validators import SEMANTIC_TYPES

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BUNDLED_MODEL = "demo"
ENV_OVERRIDES = ("LISTEN_ADDRESS", "LOG_PATH")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class _Input(_Strict):
    window_length: int = Field(128, ge=1)
    channels: int = Field(3, ge=1)
    value_range: tuple[float, float] = (-1000.0, 1000.0)
    sample_rate: Optional[float] = Field(None, gt=0)
    required_attributes: list[tuple[str, str]] = []
    text_max_len: Optional[int] = Field(None, ge=1)
    allowed_languages: Optional[list[str]] = None

    @field_validator("value_range")
    @classmethod
    def _ordered(cls, v):
        if not v[0] < v[1]:
            raise ValueError("min must be below max")
        return v

    @field_validator("required_attributes")
    @classmethod
    def _known_types(cls, v):
        for name, semantic in v:
            if semantic not in SEMANTIC_TYPES:
                raise ValueError(f"attribute {name!r}: type must be one of {SEMANTIC_TYPES}")
        if len({n for n, _ in v}) != len(v):
            raise ValueError("attribute names must be unique")
        return v


class _OOD(_Strict):
    method: Literal["msp", "energy"] = "msp"
    threshold: float = Field(allow_inf_nan=False)
    temperature: float = Field(1.0, gt=0, allow_inf_nan=False)


class _Adversarial(_Strict):
    noise_scale: float = Field(0.05, ge=0, allow_inf_nan=False)
    samples: int = Field(32, ge=8)
    flip_threshold: float = Field(0.4, ge=0, le=1)


class _Explainer(_Strict):
    top_k: int = Field(3, ge=1)
    baseline: Optional[list[float]] = None


class _File(_Strict):
    listen_address: str = "127.0.0.1:8080"
    mode: Literal["embedded-demo", "proxy"]
    model_path: Optional[str] = None
    upstream_url: Optional[str] = None
    model_profile: Optional[str] = None
    upstream_timeout: float = Field(2.0, gt=0)
    log_path: Optional[str] = None
    random_seed: int = 0
    guards: dict[str, bool] = {}
    input: _Input = _Input()
    ood: _OOD
    adversarial: _Adversarial = _Adversarial()
    explainer: _Explainer = _Explainer()


@dataclass(frozen=True)
class ServiceConfig:
    host: str
    port: int
    mode: str
    guard_config: GuardConfig
    model_path: Path | None = None
    upstream_url: str | None = None
    model_profile: Path | None = None
    upstream_timeout: float = 2.0
    log_path: Path | None = None
    config_hash: str = ""
    source: Path | None = None

    @property
    def input_spec(self) -> InputSpec:
        return self.guard_config.input_spec

    @property
    def listen_address(self) -> str:
        return f"{self.host}:{self.port}"


def bundled_model_path() -> Path:
    return Path(str(resources.files("guardgate") / "assets" / "demo_model.txt"))


def _resolve(value: str, base: Path) -> Path:
    if value == BUNDLED_MODEL:
        return bundled_model_path()
    p = Path(value)
    return p if p.is_absolute() else base / p


def _split_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not host:
        raise ValueError(f"listen_address {addr!r} is not host:port")
    port_no = int(port)
    if not 0 <= port_no <= 65535:
        raise ValueError(f"port {port_no} out of range")
    return host, port_no


def _cross_field(raw: Mapping) -> list[str]:
    errors = []
    mode = raw.get("mode")
    has_model, has_upstream = "model_path" in raw, "upstream_url" in raw
    if has_model and has_upstream:
        errors.append("model_path, upstream_url: exactly one may be set")
    elif mode == "embedded-demo" and not has_model:
        errors.append("model_path: required in embedded-demo mode")
    elif mode == "proxy" and not has_upstream:
        errors.append("upstream_url: required in proxy mode")
    if mode == "embedded-demo" and has_upstream:
        errors.append("upstream_url: not allowed in embedded-demo mode")
    if mode == "proxy" and has_model:
        errors.append("model_path: not allowed in proxy mode")
    if mode == "proxy" and "model_profile" not in raw:
        errors.append("model_profile: required in proxy mode")
    guards = raw.get("guards", {})
    if isinstance(guards, Mapping):
        for name in guards:
            if name not in BUILTIN_GUARDS:
                errors.append(f"guards.{name}: unknown guard (known: {', '.join(BUILTIN_GUARDS)})")
    return errors


def _format(err) -> str:
    loc = ".".join(str(p) for p in err["loc"]) or "<root>"
    return f"{loc}: {err['msg']}"


def parse_config(text: str, base_dir: Path = Path("."), env: Mapping[str, str] | None = None,
                 source: Path | None = None) -> ServiceConfig:
    env = os.environ if env is None else env
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"<file>: {exc}"]) from None
    errors = _cross_field(raw)
    try:
        parsed = _File.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError([_format(e) for e in exc.errors()] + errors) from None
    if errors:
        raise ConfigError(errors)

    address = env.get("LISTEN_ADDRESS", parsed.listen_address)
    log_path = env.get("LOG_PATH", parsed.log_path)
    try:
        host, port = _split_address(address)
    except ValueError as exc:
        errors.append(f"listen_address: {exc}")
    model_path = model_profile = None
    if parsed.model_path is not None:
        model_path = _resolve(parsed.model_path, base_dir)
        if not model_path.is_file():
            errors.append(f"model_path: {model_path} does not exist")
    if parsed.model_profile is not None:
        model_profile = _resolve(parsed.model_profile, base_dir)
        if not model_profile.is_file():
            errors.append(f"model_profile: {model_profile} does not exist")
    inp = parsed.input
    try:
        guard_config = GuardConfig(
            input_spec=InputSpec(
                window_length=inp.window_length,
                channels=inp.channels,
                value_range=tuple(inp.value_range),
                required_attributes=tuple(tuple(a) for a in inp.required_attributes),
                sample_rate=inp.sample_rate,
                text_max_len=inp.text_max_len,
                allowed_languages=tuple(inp.allowed_languages) if inp.allowed_languages else None,
            ),
            enabled=dict(parsed.guards),
            ood_method=parsed.ood.method,
            ood_threshold=parsed.ood.threshold,
            ood_temperature=parsed.ood.temperature,
            adv_noise_scale=parsed.adversarial.noise_scale,
            adv_samples=parsed.adversarial.samples,
            adv_flip_threshold=parsed.adversarial.flip_threshold,
            explain_baseline=tuple(parsed.explainer.baseline) if parsed.explainer.baseline else None,
            explain_top_k=parsed.explainer.top_k,
            random_seed=parsed.random_seed,
        )
    except ValueError as exc:
        errors.append(f"guards: {exc}")
    if errors:
        raise ConfigError(errors)
    return ServiceConfig(
        host=host,
        port=port,
        mode=parsed.mode,
        guard_config=guard_config,
        model_path=model_path,
        upstream_url=parsed.upstream_url,
        model_profile=model_profile,
        upstream_timeout=parsed.upstream_timeout,
        # env paths are relative to the working directory, file paths to the file
        log_path=(Path(log_path) if "LOG_PATH" in env else _resolve(log_path, base_dir)) if log_path else None,
        config_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        source=source,
    )


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> ServiceConfig:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc.strerror}"]) from None
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError([f"<file>: {path} is not UTF-8"]) from None
    return parse_config(text, path.resolve().parent, env, source=path)
