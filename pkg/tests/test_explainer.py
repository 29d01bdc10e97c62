import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guardgate import explainer
from guardgate.core import GuardConfig
from guardgate.explainer import Attribution, explain_prediction, render_text, shapley_exact
from guardgate.model import extract_features, softmax

import support


def permutation_oracle(f, x, baseline):
    """Average marginal contribution over every feature ordering, one point at a time."""
    d = len(x)
    phi = [0.0] * d
    orders = list(itertools.permutations(range(d)))
    for order in orders:
        current = list(baseline)
        prev = f(np.array([current]))[0]
        for i in order:
            current[i] = x[i]
            now = f(np.array([current]))[0]
            phi[i] += now - prev
            prev = now
    return [p / len(orders) for p in phi]


def random_mlp(rng, d):
    w1, b1 = rng.normal(size=(d, 5)), rng.normal(size=5)
    w2 = rng.normal(size=5)
    return lambda batch: np.tanh(np.asarray(batch) @ w1 + b1) @ w2 + np.sin(np.asarray(batch)[:, 0])


def test_linear_example():
    attr = shapley_exact(lambda b: 2 * b[:, 0] - b[:, 1], [3.0, 4.0], [0.0, 0.0], ("a", "b"))
    assert attr.phi == pytest.approx((6.0, -4.0), abs=1e-12)
    assert attr.total == pytest.approx(2.0, abs=1e-12)
    assert render_text(attr, 1) == "Decision driven by: a (+6.00)"
    assert render_text(attr, 2) == "Decision driven by: a (+6.00), b (-4.00)"


def test_product_example():
    # coalitions: {} -> 0, {1} -> 0, {2} -> 0, {1,2} -> 1; each player gets half
    attr = shapley_exact(lambda b: b[:, 0] * b[:, 1], [1.0, 1.0], [0.0, 0.0])
    assert attr.phi == pytest.approx((0.5, 0.5), abs=1e-15)


def test_dummy_feature():
    attr = shapley_exact(lambda b: b[:, 0] ** 2 + b[:, 1], [1.5, 2.0, 9.0], [0.0, 0.0, 0.0])
    assert attr.phi[2] == 0.0


def test_symmetric_features():
    w = np.array([1.5, 1.5, -0.3])
    attr = shapley_exact(lambda b: np.tanh(b @ w), [0.7, 0.7, 1.0], [0.0, 0.0, 0.0])
    assert attr.phi[0] == pytest.approx(attr.phi[1], abs=1e-15)


def test_rejects_bad_shapes():
    with pytest.raises(ValueError):
        shapley_exact(lambda b: b.sum(axis=1), np.zeros(17), np.zeros(17))
    with pytest.raises(ValueError):
        shapley_exact(lambda b: b.sum(axis=1), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        shapley_exact(lambda b: b.sum(axis=1), np.zeros(2), np.zeros(2), ("only-one",))


@pytest.mark.parametrize("d", range(1, 13))
def test_linear_closed_form(d):
    rng = np.random.default_rng(d)
    for _ in range(5):
        w, b = rng.normal(size=d), rng.normal()
        x, base = rng.normal(size=d) * 3, rng.normal(size=d)
        attr = shapley_exact(lambda batch: batch @ w + b, x, base)
        assert np.max(np.abs(np.array(attr.phi) - w * (x - base))) <= 1e-9


@pytest.mark.parametrize("d", range(1, 7))
def test_matches_permutation_oracle(d):
    rng = np.random.default_rng(100 + d)
    for _ in range(4):
        f = random_mlp(rng, d)
        x, base = rng.normal(size=d), rng.normal(size=d)
        attr = shapley_exact(f, x, base)
        assert np.max(np.abs(np.array(attr.phi) - permutation_oracle(f, x, base))) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31))
def test_linearity_axiom(d, seed):
    rng = np.random.default_rng(seed)
    f, g = random_mlp(rng, d), random_mlp(rng, d)
    x, base = rng.normal(size=d), rng.normal(size=d)
    both = shapley_exact(lambda b: 2.0 * f(b) - g(b), x, base)
    sep_f, sep_g = shapley_exact(f, x, base), shapley_exact(g, x, base)
    expected = 2.0 * np.array(sep_f.phi) - np.array(sep_g.phi)
    assert np.allclose(both.phi, expected, atol=1e-9)
    assert abs(both.total - (both.actual_output - both.baseline_output)) <= 1e-9


def test_demo_model_efficiency(demo_model):
    rng = np.random.default_rng(21)
    base = demo_model.baseline
    worst = 0.0
    for _ in range(200):
        x = rng.normal(size=12) * 2
        cls = int(np.argmax(demo_model.logits(x[None])[0]))
        attr = explain_prediction(demo_model, x, cls, base)
        p_x = softmax(demo_model.logits(x[None])[0])[cls]
        p_b = softmax(demo_model.logits(base[None])[0])[cls]
        worst = max(worst, abs(attr.total - (p_x - p_b)))
    assert worst <= 1e-6


def test_twelve_features_under_a_second(demo_model):
    x = extract_features(support.clean_window(np.random.default_rng(2)), demo_model)
    calls = []

    def counted(batch):
        calls.append(len(batch))
        return softmax(demo_model.logits(batch))[:, 0]

    started = time.perf_counter()
    shapley_exact(counted, x, demo_model.baseline)
    assert time.perf_counter() - started < 1.0
    assert calls == [4096]


def test_render_clamps_and_breaks_ties():
    attr = Attribution(("b", "a", "c"), (0.5, -0.5, 0.1), 0.0, 0.1)
    assert render_text(attr, 10) == "Decision driven by: a (-0.50), b (+0.50), c (+0.10)"
    with pytest.raises(ValueError):
        render_text(attr, 0)


def test_render_is_deterministic():
    attr = Attribution(("x", "y"), (0.3149, -0.12), 0.0, 0.1949)
    assert render_text(attr, 2) == render_text(attr, 2) == "Decision driven by: x (+0.31), y (-0.12)"


def test_check_renders_or_skips(demo_model):
    x = extract_features(support.clean_window(np.random.default_rng(4), "jogging"), demo_model)
    cls = int(np.argmax(demo_model.logits(x[None])[0]))
    verdict, text = explainer.check(demo_model, x, cls, GuardConfig(explain_top_k=2))
    assert verdict.passed and text.startswith("Decision driven by: ") and text.count("(") == 2
    assert abs(verdict.metrics["efficiency_gap"]) <= 1e-9
    verdict, text = explainer.check(demo_model, x, cls, GuardConfig(enabled={"explainer": False}))
    assert verdict.passed and text == ""


def test_custom_baseline(demo_model):
    x = np.linspace(-1, 1, 12)
    baseline = np.full(12, 0.5)
    cfg = GuardConfig(explain_baseline=tuple(baseline))
    assert np.array_equal(cfg.baseline_for(demo_model), baseline)
    assert np.array_equal(GuardConfig().baseline_for(demo_model), demo_model.baseline)
    attr = explain_prediction(demo_model, x, 1, baseline)
    assert math.isclose(attr.baseline_output, softmax(demo_model.logits(baseline[None])[0])[1], abs_tol=1e-12)
