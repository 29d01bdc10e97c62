"""HTTP gateway: ``POST /v1/infer`` and ``GET /v1/health``.

The request handlers are plain functions over bytes (``Gateway.handle_infer``
and ``Gateway.health``) so they can be exercised without sockets; the
``GatewayServer`` wraps them in a threaded stdlib HTTP server.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from itertools import count
from typing import Mapping

from .config import ServiceConfig
from .core import InferenceRequest
from .model import Model, UpstreamError, infer_remote, load_model, load_remote_model
from .pipeline import GuardPipeline
from .protocol import (
    ErrorBody,
    build_bad_request,
    build_serving_failure,
    is_response_id,
    new_id,
    serialize,
)

log = logging.getLogger(__name__)

REQUEST_ID_HEADER = "x-request-id"
JSON_CONTENT_TYPE = "application/json; charset=utf-8"

_logger_ids = count()


class RequestLog:
    """One JSON line per request, appended through a dedicated file handler.

    Handler emission is serialized by ``logging``, so lines never interleave,
    and write failures are reported to stderr without failing the request.
    """

    def __init__(self, path=None):
        self.path = path
        self._logger = logging.getLogger(f"guardgate.requests.{next(_logger_ids)}")
        self._logger.propagate = False
        self._logger.setLevel(logging.INFO)
        self._handler = None
        if path is not None:
            self._handler = logging.FileHandler(path, encoding="utf-8", delay=True)
            self._handler.setFormatter(logging.Formatter("%(message)s"))
            self._logger.addHandler(self._handler)

    def log_event(self, record: Mapping) -> None:
        if self._handler is None:
            return
        try:
            line = json.dumps(record, separators=(",", ":"), default=str)
        except (TypeError, ValueError):
            log.exception("unserializable request log record")
            return
        try:
            self._logger.info(line)
        except OSError as exc:
            # the handler opens its file lazily, outside logging's own error handling
            log.error("request log %s unavailable: %s", self.path, exc)

    def close(self) -> None:
        if self._handler is not None:
            self._logger.removeHandler(self._handler)
            self._handler.close()


def parse_request(body: bytes) -> InferenceRequest:
    """Decode an infer body; raises ``ValueError`` when it is not a JSON object."""
    if not body.strip():
        raise ValueError("empty body")
    doc = json.loads(body.decode("utf-8"))
    if not isinstance(doc, dict):
        raise ValueError("body is not an object")
    attributes = doc.get("attributes", {})
    if not isinstance(attributes, dict):
        raise ValueError("attributes is not an object")
    # unknown top-level keys are ignored on purpose
    return InferenceRequest(
        attributes=attributes,
        sensor_window=doc.get("sensor_window"),
        sample_rate=doc.get("sample_rate"),
        config_ref=doc.get("config") if isinstance(doc.get("config"), str) else None,
    )


def build_model(config: ServiceConfig) -> Model:
    if config.mode == "proxy":
        return load_remote_model(config.model_profile, config.upstream_url, config.upstream_timeout)
    return load_model(config.model_path)


class Gateway:
    def __init__(self, config: ServiceConfig, model: Model | None = None, pipeline: GuardPipeline | None = None):
        self.config = config
        self.model = model if model is not None else build_model(config)
        self.pipeline = pipeline or GuardPipeline(config.guard_config, self.model)
        self.request_log = RequestLog(config.log_path)

    def reload(self, config: ServiceConfig) -> None:
        """Swap guard configuration between requests."""
        self.pipeline.replace_config(config.guard_config)
        self.config = config

    def close(self) -> None:
        self.request_log.close()
        self.model.close()

    def handle_infer(self, body: bytes, headers: Mapping[str, str] | None = None):
        """Returns ``(status, headers, body_bytes)``."""
        started = time.perf_counter()
        inbound = (headers or {}).get(REQUEST_ID_HEADER)
        request_id = inbound if is_response_id(inbound) else new_id()
        stages, verdicts = [], []
        try:
            request = parse_request(body)
        except (ValueError, UnicodeDecodeError) as exc:
            response = build_bad_request("body", "JSON object", str(exc)[:200], "gateway", request_id)
        else:
            try:
                result = self.pipeline.execute(request, request_id)
                response, stages, verdicts = result.response, result.stages, result.verdicts
            except UpstreamError as exc:
                response = build_serving_failure(exc.attribute, exc.expected, exc.value, request_id)
            except Exception as exc:  # last line of defence: never answer outside the schema
                log.exception("pipeline failure for request %s", request_id)
                response = build_serving_failure("gateway", "successful processing",
                                                 type(exc).__name__, request_id)
        payload = serialize(response)
        record = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "request_id": request_id,
            "status": response.status_code,
            "latency_ms": round((time.perf_counter() - started) * 1000, 3),
            "stages": stages,
            "verdicts": [{"guard": v.guard_name, "passed": v.passed, **v.metrics} for v in verdicts],
        }
        if isinstance(response, ErrorBody):
            record.update(error_id=response.error_id, error_code=response.error_code.value,
                          source=response.source)
        self.request_log.log_event(record)
        return response.status_code, {REQUEST_ID_HEADER: request_id}, payload

    def upstream_status(self) -> str | None:
        if self.config.mode != "proxy":
            return None
        try:
            infer_remote(self.config.upstream_url, self.model.baseline,
                         timeout=min(self.config.upstream_timeout, 1.0), n_classes=self.model.n_classes)
        except UpstreamError:
            return "degraded"
        return "ok"

    def health(self):
        cfg = self.pipeline.config
        doc = {
            "status": "ok",
            "mode": self.config.mode,
            "model_kind": self.model.kind,
            "enabled_guards": [n for n in self.pipeline.guard_names if cfg.is_enabled(n)],
            "config_hash": self.config.config_hash,
        }
        upstream = self.upstream_status()
        if upstream is not None:
            doc["upstream"] = upstream
            if upstream != "ok":
                doc["status"] = "degraded"
        body = (json.dumps(doc, indent=2) + "\n").encode("utf-8")
        return 200, {}, body


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "guardgate"
    # drop idle keep-alive connections
    timeout = 30

    def _send(self, status: int, headers: Mapping[str, str], body: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", JSON_CONTENT_TYPE)
        self.send_header("Content-Length", str(len(body)))
        for k, v in headers.items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.path.rstrip("/") != "/v1/infer":
            return self._not_found()
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        with self.server.tracking():
            status, headers, payload = self.server.gateway.handle_infer(
                body, {REQUEST_ID_HEADER: self.headers.get(REQUEST_ID_HEADER)})
            self._send(status, headers, payload)

    def do_GET(self):
        if self.path.rstrip("/") != "/v1/health":
            return self._not_found()
        with self.server.tracking():
            self._send(*self.server.gateway.health())

    def _not_found(self):
        self._send(404, {}, b'{"error": "not found"}\n')

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)


class GatewayServer(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 1024

    def __init__(self, gateway: Gateway, address: tuple[str, int] | None = None):
        self.gateway = gateway
        super().__init__(address or (gateway.config.host, gateway.config.port), _Handler)
        self._inflight = 0
        self._idle = threading.Condition()

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    @contextmanager
    def tracking(self):
        with self._idle:
            self._inflight += 1
        try:
            yield
        finally:
            with self._idle:
                self._inflight -= 1
                self._idle.notify_all()

    def wait_idle(self, timeout: float = 30.0) -> bool:
        with self._idle:
            return self._idle.wait_for(lambda: self._inflight == 0, timeout)

    def drain(self, timeout: float = 30.0) -> bool:
        """Stop accepting, then wait for in-flight requests to finish."""
        self.shutdown()
        done = self.wait_idle(timeout)
        self.server_close()
        return done


def start_in_thread(server: ThreadingHTTPServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, name="guardgate-http", daemon=True)
    thread.start()
    return thread
