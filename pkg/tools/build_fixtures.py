"""Regenerate calibration data, example configs, replay corpus and goldens.

    python tools/build_fixtures.py

Everything derives from the bundled demo model and fixed seeds. Run after
retraining the model; the test suite compares against these files.
"""

from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from guardgate import ood
from guardgate.config import bundled_model_path, load_config
from guardgate.gateway import Gateway
from guardgate.model import extract_features, load_model
from guardgate.replay import ReplayRecord, dump_record
from guardgate.synthetic import ACTIVITIES, corrupt_window, generate_window

ROOT = Path(__file__).resolve().parents[1]
CALIBRATION_SEED = 4242
CORPUS_SEED = 31337
TARGET_PASS_RATE = 0.99
MAX_TRIES = 50
ZERO_REQUEST_ID = "00000000-0000-4000-8000-000000000000"
ZERO_ERROR_ID = "00000000-0000-4000-8000-000000000001"

CONFIG_TEMPLATE = """\
# Example gateway configuration: bundled demo model served in-process.
# "demo" resolves to the weights file shipped with the package; other paths
# are relative to this file. OOD thresholds come from
#   guardgate calibrate --scores fixtures/calibration/demo_logits.csv --target {target}
# (add --method energy for the energy score: threshold {energy_threshold!r}).

listen_address = "127.0.0.1:8080"
mode = "{mode}"
{model_line}
log_path = "guardgate-requests.log"
random_seed = 7

[guards]
input-validator = true
adversarial-guard = true
ood-guard = true
explainer = true

[input]
window_length = 128
channels = 3
# plausibility bound of the sensor, not the training range
value_range = [-1000.0, 1000.0]
sample_rate = 20.0
required_attributes = [["user_id", "string"]]
text_max_len = 512
allowed_languages = ["en"]

[ood]
method = "msp"
threshold = {msp_threshold!r}
temperature = 1.0

[adversarial]
noise_scale = 0.05
samples = 32
flip_threshold = 0.4

[explainer]
top_k = 3
"""


def request_for(window, user="u-0001", sample_rate=20.0, **attributes):
    rows = window.tolist() if isinstance(window, np.ndarray) else window
    return {"attributes": {"user_id": user, **attributes}, "sensor_window": rows, "sample_rate": sample_rate}


def normalize_ids(raw: bytes) -> bytes:
    text = raw.decode("utf-8")
    text = re.sub(r'"request-id": "[0-9a-f-]{36}"', f'"request-id": "{ZERO_REQUEST_ID}"', text)
    text = re.sub(r'"error-id": "[0-9a-f-]{36}"', f'"error-id": "{ZERO_ERROR_ID}"', text)
    return text.encode("utf-8")


def naive_forward(model_path: Path, window: list[list[float]]):
    """Stats and forward pass in plain Python, independent of numpy paths."""
    lines = [l for l in model_path.read_text().splitlines() if l and not l.startswith("#")]
    header = {l.split()[0]: l.split()[1:] for l in lines[1:6]}
    means = [float(v) for v in header["feature_means"]]
    stds = [float(v) for v in header["feature_stds"]]
    clip = float(header["input_clip"][0])
    feats = []
    for axis in range(3):
        col = [row[axis] for row in window]
        mu = sum(col) / len(col)
        sd = math.sqrt(sum((v - mu) ** 2 for v in col) / len(col))
        feats += [mu, sd, min(col), max(col)]
    x = [min(clip, max(-clip, (f - m) / s)) for f, m, s in zip(feats, means, stds)]
    assert lines[6].startswith("layers ")
    pos = 7
    n_layers = int(lines[6].split()[1])
    for layer in range(n_layers):
        fan_in, fan_out = (int(v) for v in lines[pos].split()[1:])
        rows = [[float(v) for v in lines[pos + 1 + r].split()] for r in range(fan_in)]
        bias = [float(v) for v in lines[pos + 1 + fan_in].split()[1:]]
        pos += fan_in + 2
        out = [bias[j] + sum(x[i] * rows[i][j] for i in range(fan_in)) for j in range(fan_out)]
        x = [max(0.0, v) for v in out] if layer < n_layers - 1 else out
    top = max(x)
    exps = [math.exp(v - top) for v in x]
    total = sum(exps)
    return feats, x, [e / total for e in exps]


def main():
    model_path = bundled_model_path()
    model = load_model(model_path)

    # calibration logits from a held-out in-distribution set
    rng = np.random.default_rng(CALIBRATION_SEED)
    windows = [generate_window(a, rng) for a in ACTIVITIES for _ in range(200)]
    logits = model.logits(np.stack([extract_features(w, model) for w in windows]))
    calib = ROOT / "fixtures" / "calibration"
    calib.mkdir(parents=True, exist_ok=True)
    (calib / "demo_logits.csv").write_text(
        "# in-distribution logits of the demo model, one vector per line\n"
        + "\n".join(",".join(repr(float(v)) for v in row) for row in logits) + "\n")
    msp_t = ood.calibrate_threshold([ood.guard_score(r, "msp") for r in logits], TARGET_PASS_RATE)
    energy_t = ood.calibrate_threshold([ood.guard_score(r, "energy") for r in logits], TARGET_PASS_RATE)
    print(f"msp threshold {msp_t!r}, energy threshold {energy_t!r}")

    configs = ROOT / "configs"
    configs.mkdir(exist_ok=True)
    (configs / "example.conf").write_text(CONFIG_TEMPLATE.format(
        target=TARGET_PASS_RATE, energy_threshold=energy_t, msp_threshold=msp_t,
        mode="embedded-demo", model_line='model_path = "demo"'))
    (configs / "proxy.conf").write_text(CONFIG_TEMPLATE.format(
        target=TARGET_PASS_RATE, energy_threshold=energy_t, msp_threshold=msp_t, mode="proxy",
        model_line='upstream_url = "http://127.0.0.1:9000/v1/logits"\nmodel_profile = "demo"\n'
                   "upstream_timeout = 2.0").replace("8080", "8081")
        .replace("in-process", "behind an upstream model server"))

    config = load_config(configs / "example.conf", env={})
    gateway = Gateway(config)

    def status_of(req):
        status, _, body = gateway.handle_infer(json.dumps(req).encode())
        return status, json.loads(body)

    # replay corpus: one clean window per activity, the corrupted-sensor
    # scenario, and malformed requests
    rng = np.random.default_rng(CORPUS_SEED)
    records, clean = [], {}
    for activity in ACTIVITIES:
        for _ in range(MAX_TRIES):
            window = np.round(generate_window(activity, rng), 4)
            req = request_for(window)
            status, doc = status_of(req)
            if status == 200 and doc["data"]["class"][0] == activity:
                break
        else:
            raise SystemExit(f"no clean {activity} window passes the default guards")
        clean[activity] = window
        records.append(ReplayRecord(f"clean-{activity}", req, 200))
    for _ in range(MAX_TRIES):
        corrupted = corrupt_window(clean["jogging"], rng)
        status, doc = status_of(request_for(corrupted))
        if status == 500 and doc["error_code"] == "OUT_OF_DISTRIBUTION":
            break
    else:
        raise SystemExit("no corrupted window is flagged out of distribution")
    records.append(ReplayRecord("corrupted-jogging", request_for(corrupted), 500, "OUT_OF_DISTRIBUTION"))
    records.append(ReplayRecord("short-window", request_for(clean["walking"][:100]), 400, "INVALID_ATTRIBUTE_TYPE"))
    records.append(ReplayRecord("two-channels", request_for(clean["walking"][:, :2]), 400, "INVALID_ATTRIBUTE_TYPE"))
    missing_user = request_for(clean["sitting"])
    del missing_user["attributes"]["user_id"]
    records.append(ReplayRecord("missing-user-id", missing_user, 400, "INVALID_ATTRIBUTE_TYPE"))
    saturated = clean["standing"].copy()
    saturated[5, 1] = 2500.0
    records.append(ReplayRecord("out-of-range", request_for(saturated), 400, "INVALID_ATTRIBUTE_TYPE"))
    records.append(ReplayRecord("french-note", request_for(
        clean["walking"], text="Je suis sorti marcher une heure au bord de la rivière ce matin."),
        400, "INVALID_ATTRIBUTE_TYPE"))
    records.append(ReplayRecord("english-note", request_for(
        clean["walking"], text="I went out for a long walk along the river this morning."), 200))
    for r in records:
        status, doc = status_of(r.request)
        assert status == r.expected_status and doc.get("error_code") == r.expected_error_code, r.name
    corpus = ROOT / "corpus" / "case_study.jsonl"
    corpus.parent.mkdir(exist_ok=True)
    corpus.write_text("\n".join(dump_record(r) for r in records) + "\n")
    print(f"wrote {len(records)} corpus records")

    # golden response bodies
    golden = ROOT / "fixtures" / "protocol"
    golden.mkdir(parents=True, exist_ok=True)
    by_name = {r.name: r for r in records}
    for name, record in (("success", "clean-jogging"), ("bad_request", "short-window"),
                         ("out_of_distribution", "corrupted-jogging")):
        _, _, body = gateway.handle_infer(json.dumps(by_name[record].request).encode())
        (golden / f"{name}.golden").write_bytes(normalize_ids(body))
    gateway.close()

    # independent forward pass for the jogging fixture window
    feats, logits_ref, probs_ref = naive_forward(model_path, clean["jogging"].tolist())
    (ROOT / "fixtures" / "model").mkdir(parents=True, exist_ok=True)
    (ROOT / "fixtures" / "model" / "jogging_window.json").write_text(json.dumps({
        "window": clean["jogging"].tolist(),
        "raw_features": feats,
        "logits": logits_ref,
        "probabilities": probs_ref,
        "top_class": model.class_labels[int(np.argmax(logits_ref))],
    }, indent=1) + "\n")
    print("wrote goldens and model fixture")


if __name__ == "__main__":
    main()
