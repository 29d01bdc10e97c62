"""Synthetic accelerometer windows for the six demo activities.

Each activity is a gravity offset plus a periodic body-motion component and
sensor noise. Per-window jitter on offsets, amplitudes and cadence keeps the
classes overlapping enough to be a real (if easy) classification task.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVITIES = ("downstairs", "jogging", "sitting", "standing", "upstairs", "walking")

DEFAULT_WINDOW_LENGTH = 128
DEFAULT_SAMPLE_RATE = 20.0


@dataclass(frozen=True)
class ActivityProcess:
    gravity: tuple[float, float, float]
    amplitude: tuple[float, float, float]
    cadence_hz: float
    noise: float


PROCESSES: dict[str, ActivityProcess] = {
    "downstairs": ActivityProcess((0.8, 8.4, 1.2), (3.0, 5.5, 2.6), 1.7, 1.0),
    "jogging": ActivityProcess((-0.6, 7.4, 0.4), (5.5, 8.0, 3.8), 2.6, 1.4),
    "sitting": ActivityProcess((1.2, 2.6, 9.2), (0.05, 0.05, 0.05), 0.3, 0.06),
    "standing": ActivityProcess((-0.4, 9.5, 1.4), (0.12, 0.12, 0.12), 0.3, 0.12),
    "upstairs": ActivityProcess((0.2, 9.0, -0.8), (2.2, 3.4, 2.0), 1.4, 0.8),
    "walking": ActivityProcess((0.0, 9.4, 0.6), (1.6, 4.2, 1.4), 2.0, 0.5),
}


def generate_window(
    activity: str,
    rng: np.random.Generator,
    window_length: int = DEFAULT_WINDOW_LENGTH,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> np.ndarray:
    """Return a ``(window_length, 3)`` window of readings in m/s^2."""
    proc = PROCESSES[activity]
    t = np.arange(window_length) / sample_rate
    gravity = np.asarray(proc.gravity) + rng.normal(0.0, 0.35, size=3)
    amplitude = np.asarray(proc.amplitude) * rng.lognormal(0.0, 0.15, size=3)
    cadence = proc.cadence_hz * rng.uniform(0.9, 1.1)
    phase = rng.uniform(0.0, 2 * np.pi, size=3)
    # second harmonic gives the heel-strike asymmetry seen in real gait traces
    motion = np.sin(2 * np.pi * cadence * t[:, None] + phase) + 0.35 * np.sin(
        4 * np.pi * cadence * t[:, None] + 2 * phase
    )
    noise = rng.normal(0.0, proc.noise, size=(window_length, 3))
    return gravity + amplitude * motion + noise


def corrupt_window(
    window: np.ndarray,
    rng: np.random.Generator,
    fraction: float = 0.1,
    magnitude: float = 500.0,
) -> np.ndarray:
    """Replace a random ``fraction`` of readings with +-``magnitude`` spikes."""
    out = np.array(window, dtype=float, copy=True)
    mask = rng.random(out.shape) < fraction
    # guarantee at least one spike so the result is never accidentally clean
    if not mask.any():
        mask.flat[rng.integers(out.size)] = True
    signs = rng.choice([-1.0, 1.0], size=out.shape)
    out[mask] = signs[mask] * magnitude
    return out


def sample_dataset(
    n_per_class: int,
    rng: np.random.Generator,
    window_length: int = DEFAULT_WINDOW_LENGTH,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Balanced set of windows with integer labels indexing ``ACTIVITIES``."""
    windows = []
    labels = []
    for label, activity in enumerate(ACTIVITIES):
        for _ in range(n_per_class):
            windows.append(generate_window(activity, rng, window_length, sample_rate))
            labels.append(label)
    return windows, np.asarray(labels)
