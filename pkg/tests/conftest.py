import json
import threading

import jsonschema
import numpy as np
import pytest

from guardgate import protocol

import support

# every response document serialized anywhere in the suite is checked here
_checked = {"documents": 0, "failures": []}
_check_lock = threading.Lock()
_real_dump = protocol._dump
_validators = {}


def _validator(schema):
    key = id(schema)
    if key not in _validators:
        _validators[key] = jsonschema.Draft202012Validator(schema)
    return _validators[key]


def _checked_dump(doc):
    raw = _real_dump(doc)
    decoded = json.loads(raw)
    errors = sorted(_validator(protocol.schema_for(decoded)).iter_errors(decoded), key=str)
    with _check_lock:
        _checked["documents"] += 1
        if errors:
            _checked["failures"].append((decoded, [e.message for e in errors]))
    if errors:
        raise AssertionError(f"response violates its schema: {errors[0].message}")
    return raw


@pytest.fixture(autouse=True)
def schema_checked_responses(monkeypatch):
    monkeypatch.setattr(protocol, "_dump", _checked_dump)
    before = len(_checked["failures"])
    yield _checked
    assert len(_checked["failures"]) == before, _checked["failures"][before:]


@pytest.fixture(scope="session")
def demo_model():
    return support.demo_model()


@pytest.fixture(scope="session")
def service_config():
    return support.example_service()


@pytest.fixture()
def guard_config(service_config):
    return service_config.guard_config


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if support.ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(support.ACCEPTANCE_RESULTS):
            terminalreporter.write_line(support.ACCEPTANCE_RESULTS[number])
    if _checked["documents"]:
        terminalreporter.write_line(
            f"schema check: {_checked['documents']} response documents validated, "
            f"{len(_checked['failures'])} violations")
