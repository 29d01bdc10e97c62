"""Train the bundled 12-16-6 activity model on synthetic windows.

    python tools/train_demo_model.py [--out src/guardgate/assets/demo_model.txt]

Besides cross-entropy on the synthetic activities, the loss carries an
outlier-exposure term: random points of the clipped feature box (uniform, and
with random coordinates pushed to the box faces) are trained towards the
uniform distribution, so the network is unsure wherever it saw no data.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from guardgate.model import ACTIVITY_LABELS, DenseModel, FEATURE_NAMES, dump_model, window_statistics
from guardgate.synthetic import sample_dataset

SEED = 20240117
HIDDEN = 16
INPUT_CLIP = 6.0


def _outlier_batch(rng, n, dim, clip):
    x = rng.uniform(-clip, clip, size=(n, dim))
    faces = rng.random((n, dim)) < rng.random((n, 1))
    x[faces] = np.sign(x[faces]) * clip
    return x


def train(n_per_class=600, epochs=400, oe_weight=1.0, clip=INPUT_CLIP, seed=SEED, verbose=True):
    rng = np.random.default_rng(seed)
    windows, y = sample_dataset(n_per_class, rng)
    raw = np.stack([window_statistics(w) for w in windows])
    means = raw.mean(axis=0)
    stds = raw.std(axis=0)
    x = np.clip((raw - means) / stds, -clip, clip) if clip else (raw - means) / stds
    n, d = x.shape
    k = len(ACTIVITY_LABELS)
    onehot = np.eye(k)[y]

    params = [
        rng.normal(0, np.sqrt(2.0 / d), size=(d, HIDDEN)), np.zeros(HIDDEN),
        rng.normal(0, np.sqrt(1.0 / HIDDEN), size=(HIDDEN, k)), np.zeros(k),
    ]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    lr, b1, b2, eps, wd = 1e-2, 0.9, 0.999, 1e-8, 1e-4
    batch = 256
    step = 0
    for epoch in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start:start + batch]
            xb, tb = x[idx], onehot[idx]
            weights = np.ones(len(idx))
            if oe_weight:
                xo = _outlier_batch(rng, len(idx), d, clip)
                xb = np.vstack([xb, xo])
                tb = np.vstack([tb, np.full((len(idx), k), 1.0 / k)])
                weights = np.concatenate([weights, np.full(len(idx), oe_weight)])
            w1, c1, w2, c2 = params
            pre = xb @ w1 + c1
            h = np.maximum(pre, 0)
            logits = h @ w2 + c2
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            g = (p - tb) * weights[:, None] / weights.sum()
            grads = [None, None, h.T @ g, g.sum(axis=0)]
            gh = g @ w2.T * (pre > 0)
            grads[0] = xb.T @ gh
            grads[1] = gh.sum(axis=0)
            step += 1
            for i, (param, grad) in enumerate(zip(params, grads)):
                if param.ndim == 2:
                    grad = grad + wd * param
                m[i] = b1 * m[i] + (1 - b1) * grad
                v[i] = b2 * v[i] + (1 - b2) * grad * grad
                mh = m[i] / (1 - b1 ** step)
                vh = v[i] / (1 - b2 ** step)
                param -= lr * mh / (np.sqrt(vh) + eps)
        if verbose and (epoch + 1) % 100 == 0:
            w1, c1, w2, c2 = params
            acc = ((np.maximum(x @ w1 + c1, 0) @ w2 + c2).argmax(axis=1) == y).mean()
            print(f"epoch {epoch + 1}: train accuracy {acc:.4f}")

    w1, c1, w2, c2 = params
    return DenseModel([(w1, c1), (w2, c2)], ACTIVITY_LABELS, means, stds, FEATURE_NAMES,
                      input_clip=clip or None)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="src/guardgate/assets/demo_model.txt")
    parser.add_argument("--oe-weight", type=float, default=1.0)
    parser.add_argument("--clip", type=float, default=INPUT_CLIP)
    args = parser.parse_args()
    model = train(oe_weight=args.oe_weight, clip=args.clip)
    dump_model(model, args.out)
    print(f"wrote {Path(args.out)}")


if __name__ == "__main__":
    main()
