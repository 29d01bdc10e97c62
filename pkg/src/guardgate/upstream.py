"""Minimal upstream model server speaking the logits wire contract.

POST a flat JSON array of standardized features and get a flat array of
logits back; POST an array of arrays for a batch. Used as the upstream in
proxy mode and as a stub in tests (``delay`` simulates a slow model).
"""

from __future__ import annotations

import json
import logging
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .model import Model

log = logging.getLogger(__name__)


class _UpstreamHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    timeout = 30

    def do_POST(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        server: UpstreamServer = self.server
        server.calls += 1
        if server.delay:
            time.sleep(server.delay)
        try:
            doc = json.loads(raw)
            batch = np.asarray(doc, dtype=float)
            if batch.ndim not in (1, 2):
                raise ValueError("expected a feature array or an array of them")
            logits = server.model.logits(np.atleast_2d(batch))
            out = logits[0].tolist() if batch.ndim == 1 else logits.tolist()
            if server.transform is not None:
                out = server.transform(out)
            status, body = 200, json.dumps(out).encode()
        except (ValueError, TypeError) as exc:
            status, body = 400, json.dumps({"error": str(exc)}).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        log.debug(fmt, *args)


class UpstreamServer(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 1024

    def __init__(self, model: Model, address=("127.0.0.1", 0), delay: float = 0.0, transform=None):
        self.model = model
        self.delay = delay
        self.transform = transform
        self.calls = 0
        super().__init__(address, _UpstreamHandler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}/v1/logits"
