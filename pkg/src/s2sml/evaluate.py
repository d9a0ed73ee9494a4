"""Multi-step prediction error E_p over random windows of a series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .linalg import Rng
from .signals import Series


def ep_error(pred, truth) -> float:
    """Root of the mean squared L2 deviation over all predicted points."""
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    return float(np.sqrt(np.mean(np.sum((pred - truth) ** 2, axis=-1))))


@dataclass
class EvalReport:
    mean: float
    std: float
    errors: np.ndarray   # E_p per trial
    profile: np.ndarray  # RMS deviation at each horizon step, over trials
    starts: np.ndarray
    horizon: int


def eval_windows(predict_fn, series: Series, m: int, horizon: int, starts) -> EvalReport:
    """E_p for explicit 1-based window starts.

    ``predict_fn(inputs, horizon)`` maps a batch ``(B, m, d)`` to ``(B, horizon, d)``.
    """
    v = series.values
    starts = np.asarray(starts, dtype=np.int64)
    if np.any(starts < 1) or np.any(starts + m + horizon - 1 > len(v)):
        raise ValueError(f"windows of m={m} + horizon={horizon} do not fit series of length {len(v)}")
    idx = starts[:, None] - 1 + np.arange(m + horizon)[None, :]
    seq = v[idx][..., None]
    inputs, truth = seq[:, :m], seq[:, m:]
    pred = np.asarray(predict_fn(inputs, horizon))
    sq = np.sum((pred - truth) ** 2, axis=-1)  # (trials, horizon)
    errors = np.sqrt(np.mean(sq, axis=1))
    return EvalReport(
        mean=float(np.mean(errors)),
        std=float(np.std(errors)),
        errors=errors,
        profile=np.sqrt(np.mean(sq, axis=0)),
        starts=starts,
        horizon=horizon,
    )


def eval_Ep(predict_fn, series: Series, m: int, k: int, p: int, trials: int, rng: Rng) -> EvalReport:
    """Average E_p over ``trials`` uniformly drawn windows, predicting k*p points."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    horizon = k * p
    n = len(series.values)
    if m + horizon > n:
        raise ValueError(f"series of {n} points too short for m={m} and kp={horizon}")
    starts = rng.integers(1, n - m - horizon + 2, size=trials)
    return eval_windows(predict_fn, series, m, horizon, starts)


def engine(model):
    """Prediction callable for ``eval_Ep`` backed by the model's own algorithm."""
    return lambda inputs, horizon: nn.predict(model, inputs, horizon)
