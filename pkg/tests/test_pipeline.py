import dataclasses

import numpy as np
import pytest

from guardgate.core import GuardConfig, GuardVerdict, InferenceRequest
from guardgate.pipeline import GuardPipeline, execute
from guardgate.protocol import ErrorBody, SuccessBody

import support

FULL_ORDER = ["input-validator", "adversarial-guard", "ood-guard", "model", "explainer"]


def request(window, **kw):
    doc = support.request_doc(window, **kw)
    return InferenceRequest(attributes=doc["attributes"], sensor_window=doc["sensor_window"],
                            sample_rate=doc["sample_rate"])


@pytest.fixture()
def counting(demo_model):
    return support.CountingModel(demo_model)


@pytest.fixture()
def pipeline(guard_config, counting):
    return GuardPipeline(guard_config, counting)


class RecordingGuard:
    source = "gateway"

    def __init__(self, fail=False):
        self.calls = 0
        self.fail = fail

    def check(self, ctx):
        self.calls += 1
        if self.fail:
            return GuardVerdict.bad_input("range-guard", "sensor_window", "custom range", "out of range")
        return GuardVerdict.ok("range-guard")


def test_full_pass_order(pipeline, rng):
    result = pipeline.execute(request(support.clean_window(rng, "walking")))
    assert isinstance(result.response, SuccessBody)
    assert result.stages == FULL_ORDER
    assert pipeline.stage_order() == FULL_ORDER
    assert result.response.explainability.startswith("Decision driven by: ")


def test_validation_failure_skips_model(pipeline, counting, rng):
    result = pipeline.execute(request(support.clean_window(rng)[:100]))
    body = result.response
    assert isinstance(body, ErrorBody) and body.status_code == 400
    assert (body.data_attribute, body.data_expected_value, body.data_value) == ("window_length", 128, 100)
    assert result.stages == ["input-validator"]
    assert counting.calls == 0
    assert pipeline.invocations["model"] == 0


def test_corrupted_window_out_of_distribution(pipeline, counting):
    rng = np.random.default_rng(77)
    hits = 0
    for _ in range(20):
        result = pipeline.execute(request(support.corrupted_window(rng)))
        if isinstance(result.response, ErrorBody):
            assert result.response.error_code.value == "OUT_OF_DISTRIBUTION"
            assert result.stages == FULL_ORDER[:3]
            hits += 1
    assert hits >= 17
    assert pipeline.invocations["explainer"] + hits == 20


def test_disabling_ood_lets_corrupted_window_reach_inference(guard_config, counting):
    window = support.corrupted_window(np.random.default_rng(77))
    on = GuardPipeline(guard_config, counting).execute(request(window))
    assert on.response.status_code == 500
    off_cfg = dataclasses.replace(guard_config, enabled={**guard_config.enabled, "ood-guard": False})
    off = GuardPipeline(off_cfg, counting).execute(request(window))
    assert "model" in off.stages and "ood-guard" not in off.stages
    assert off.response.status_code == 200


def test_adversarial_failure_stops_before_ood(guard_config, counting, rng):
    cfg = dataclasses.replace(guard_config, adv_noise_scale=25.0, adv_flip_threshold=0.0)
    pipe = GuardPipeline(cfg, counting)
    result = pipe.execute(request(support.clean_window(rng)))
    assert result.response.error_code.value == "ADVERSARIAL_ATTACK_DETECTED"
    assert result.response.source == "adversarial-guard"
    assert result.stages == FULL_ORDER[:2]
    assert pipe.invocations["ood-guard"] == 0


def test_register_custom_guard(pipeline, rng):
    guard = RecordingGuard()
    pipeline.register_guard("range-guard", guard, 150)
    assert "range-guard" in pipeline.guard_names
    assert pipeline.stage_order()[:3] == ["input-validator", "range-guard", "adversarial-guard"]
    result = pipeline.execute(request(support.clean_window(rng)))
    assert result.stages[1] == "range-guard" and guard.calls == 1


def test_custom_guard_failure_short_circuits(pipeline, counting, rng):
    pipeline.register_guard("range-guard", RecordingGuard(fail=True), 150)
    result = pipeline.execute(request(support.clean_window(rng)))
    assert result.response.status_code == 400 and result.response.source == "gateway"
    assert counting.calls == 0


def test_register_rejects_duplicates(pipeline):
    with pytest.raises(ValueError):
        pipeline.register_guard("ood-guard", RecordingGuard(), 350)
    with pytest.raises(ValueError):
        pipeline.register_guard("model", RecordingGuard(), 350)
    with pytest.raises(ValueError):
        pipeline.register_guard("late", RecordingGuard(), 400)


def test_disabled_registered_guard_never_invoked(guard_config, counting, rng):
    guard = RecordingGuard()
    cfg = dataclasses.replace(guard_config, enabled={**guard_config.enabled, "range-guard": False})
    pipe = GuardPipeline(cfg, counting, extra_guards=[("range-guard", guard, 250)])
    for _ in range(3):
        assert pipe.execute(request(support.clean_window(rng))).response.status_code == 200
    assert guard.calls == 0 and pipe.invocations["range-guard"] == 0


def test_unknown_guard_in_config(counting):
    with pytest.raises(ValueError):
        GuardPipeline(GuardConfig(enabled={"no-such-guard": True}), counting)


def test_replace_config(pipeline, guard_config, rng):
    window = support.clean_window(rng)
    pipeline.replace_config(dataclasses.replace(guard_config, enabled={"explainer": False}))
    result = pipeline.execute(request(window))
    assert "explainer" not in result.stages and result.response.explainability == ""


def test_determinism_modulo_ids(pipeline, rng):
    for window in (support.clean_window(rng), support.corrupted_window(rng), support.clean_window(rng)[:50]):
        a = support.normalize_ids(pipeline_bytes(pipeline, window))
        b = support.normalize_ids(pipeline_bytes(pipeline, window))
        assert a == b


def pipeline_bytes(pipeline, window):
    from guardgate.protocol import serialize
    return serialize(pipeline.execute(request(window)).response)


def test_feature_error_unvalidated(guard_config, counting):
    cfg = dataclasses.replace(guard_config, enabled={**guard_config.enabled, "input-validator": False})
    result = GuardPipeline(cfg, counting).execute(request([["a", "b", "c"]] * 128))
    assert result.response.status_code == 400
    assert result.response.source == "gateway"


def test_one_shot_execute(guard_config, demo_model, rng):
    body = execute(request(support.clean_window(rng)), guard_config, demo_model)
    assert body.status_code == 200


def _failing_request(kind, rng):
    window = support.clean_window(rng)
    if kind == "short":
        return request(window[: int(rng.integers(1, 128))]), "input-validator"
    if kind == "channels":
        return request(window[:, :2]), "input-validator"
    if kind == "nan":
        rows = window.tolist()
        rows[int(rng.integers(128))][int(rng.integers(3))] = float("nan")
        return request(rows), "input-validator"
    if kind == "range":
        window[int(rng.integers(128)), int(rng.integers(3))] = float(rng.choice([-1, 1])) * rng.uniform(1001, 1e5)
        return request(window), "input-validator"
    if kind == "user":
        req = request(window)
        return dataclasses.replace(req, attributes={}), "input-validator"
    if kind == "rate":
        return request(window, sample_rate=float(rng.choice([10.0, 50.0, 100.0]))), "input-validator"
    if kind == "text":
        return request(window, text="x" * int(rng.integers(513, 2000))), "input-validator"
    return request(support.corrupted_window(rng)), "ood-guard"


def test_randomized_failures_short_circuit(pipeline, counting):
    rng = np.random.default_rng(2024)
    kinds = ["short", "channels", "nan", "range", "user", "rate", "text", "corrupt"]
    checked = passed_through = 0
    while checked < 50:
        kind = kinds[int(rng.integers(len(kinds)))]
        req, guard = _failing_request(kind, rng)
        before = counting.calls
        result = pipeline.execute(req)
        if kind == "corrupt" and result.response.status_code == 200:
            passed_through += 1  # an undetected corruption is not a failing request
            continue
        assert result.failed is not None and result.failed.guard_name == guard
        assert result.stages == FULL_ORDER[: FULL_ORDER.index(guard) + 1]
        if guard == "input-validator":
            assert counting.calls == before
            assert result.response.status_code == 400
        checked += 1
    assert pipeline.invocations["model"] == pipeline.invocations["explainer"] == passed_through
