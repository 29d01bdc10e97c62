"""Replay a recorded request corpus against a running gateway.

The corpus holds one JSON record per line::

    {"name": ..., "request": {...}, "expected_status": 500,
     "expected_error_code": "OUT_OF_DISTRIBUTION"}
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import httpx


class CorpusError(ValueError):
    pass


class ReplayTransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReplayRecord:
    name: str
    request: dict
    expected_status: int
    expected_error_code: str | None = None

    def __post_init__(self):
        if (self.expected_status == 200) != (self.expected_error_code is None):
            raise CorpusError(f"{self.name}: expected_error_code must be set iff expected_status != 200")


@dataclass(frozen=True)
class ReplayOutcome:
    name: str
    expected_status: int
    expected_error_code: str | None
    status: int
    error_code: str | None

    @property
    def ok(self) -> bool:
        return self.status == self.expected_status and self.error_code == self.expected_error_code


def load_corpus(path: str | Path) -> list[ReplayRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            doc = json.loads(line)
            records.append(ReplayRecord(doc["name"], doc["request"], int(doc["expected_status"]),
                                        doc.get("expected_error_code")))
        except (ValueError, KeyError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return records


def dump_record(record: ReplayRecord) -> str:
    return json.dumps({
        "name": record.name,
        "expected_status": record.expected_status,
        "expected_error_code": record.expected_error_code,
        "request": record.request,
    }, separators=(",", ":"))


def _send(client: httpx.Client, endpoint: str, record: ReplayRecord) -> ReplayOutcome:
    try:
        resp = client.post(endpoint, content=json.dumps(record.request).encode(),
                           headers={"Content-Type": "application/json"})
    except httpx.TransportError as exc:
        raise ReplayTransportError(f"{endpoint}: {exc}") from None
    try:
        code = resp.json().get("error_code")
    except ValueError:
        code = "<unparseable>"
    return ReplayOutcome(record.name, record.expected_status, record.expected_error_code,
                         resp.status_code, code)


def replay(records: list[ReplayRecord], endpoint: str, parallel: int = 1,
           timeout: float = 30.0) -> list[ReplayOutcome]:
    """Send every record; outcomes come back in corpus order."""
    with httpx.Client(timeout=timeout) as client:
        if parallel <= 1:
            return [_send(client, endpoint, r) for r in records]
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(lambda r: _send(client, endpoint, r), records))


def summary_table(outcomes: list[ReplayOutcome]) -> str:
    rows = [("name", "expected", "actual", "result")]
    for o in outcomes:
        exp = f"{o.expected_status} {o.expected_error_code or ''}".strip()
        act = f"{o.status} {o.error_code or ''}".strip()
        rows.append((o.name, exp, act, "pass" if o.ok else "FAIL"))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    passed = sum(o.ok for o in outcomes)
    lines.append(f"{passed}/{len(outcomes)} records passed")
    return "\n".join(lines)
