"""Shared helpers for the test suite."""

from __future__ import annotations

import dataclasses
import re
from pathlib import Path

import numpy as np

from guardgate.config import bundled_model_path, load_config
from guardgate.model import DenseModel, load_model
from guardgate.synthetic import corrupt_window, generate_window

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE_CONFIG = ROOT / "configs" / "example.conf"
PROXY_CONFIG = ROOT / "configs" / "proxy.conf"
CORPUS = ROOT / "corpus" / "case_study.jsonl"
GOLDEN = ROOT / "fixtures" / "protocol"

_REQ_ID = re.compile(r'"request-id": "[0-9a-f-]{36}"')
_ERR_ID = re.compile(r'"error-id": "[0-9a-f-]{36}"')


def normalize_ids(raw: bytes) -> bytes:
    text = raw.decode("utf-8")
    text = _REQ_ID.sub('"request-id": "00000000-0000-4000-8000-000000000000"', text)
    text = _ERR_ID.sub('"error-id": "00000000-0000-4000-8000-000000000001"', text)
    return text.encode("utf-8")


def example_service(tmp_path=None, path=EXAMPLE_CONFIG):
    """Example config; the request log goes to ``tmp_path`` or nowhere."""
    env = {} if tmp_path is None else {"LOG_PATH": str(tmp_path / "requests.log")}
    config = load_config(path, env=env)
    if tmp_path is None:
        config = dataclasses.replace(config, log_path=None)
    return config


def with_guards(config, **changes):
    """Copy of a GuardConfig with fields replaced."""
    return dataclasses.replace(config, **changes)


def demo_model() -> DenseModel:
    return load_model(bundled_model_path())


def request_doc(window, user="u-1", sample_rate=20.0, **attributes) -> dict:
    rows = window.tolist() if isinstance(window, np.ndarray) else window
    return {"attributes": {"user_id": user, **attributes}, "sensor_window": rows,
            "sample_rate": sample_rate}


def clean_window(rng, activity=None):
    from guardgate.synthetic import ACTIVITIES
    activity = activity or ACTIVITIES[int(rng.integers(len(ACTIVITIES)))]
    return generate_window(activity, rng)


def corrupted_window(rng, activity=None):
    return corrupt_window(clean_window(rng, activity), rng)


class CountingModel(DenseModel):
    """Demo model that counts forward passes."""

    def __init__(self, base: DenseModel):
        super().__init__(base.layers, base.class_labels, base.feature_means, base.feature_stds,
                         base.feature_names, base.input_clip)
        self.calls = 0

    def logits(self, features):
        self.calls += 1
        return super().logits(features)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_RESULTS: dict[int, str] = {}
