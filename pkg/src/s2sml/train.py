"""Backpropagation through time for both architectures, Adam, and the training loop."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .linalg import ShapeError, make_rng
from .nn import MlModel, Seq2SeqModel

log = logging.getLogger(__name__)

Gradients = dict  # same keys and shapes as nn.params(model)


def loss_mse(pred, truth) -> float:
    """Mean over sequence positions of the squared L2 deviation.

    Batched inputs ``(B, k, d)`` are averaged over the batch as well.
    """
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    return float(np.mean(np.sum((pred - truth) ** 2, axis=-1)))


def _batch(xs, ys):
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if xs.ndim == 2:
        xs, ys = xs[None], ys[None]
    if xs.ndim != 3 or ys.ndim != 3 or xs.shape[0] != ys.shape[0]:
        raise ShapeError(f"bad sample batch shapes {xs.shape} {ys.shape}")
    return xs, ys


def _encoder_backward(cell, xs, states, g_last, grads, prefix):
    """Backprop a gradient on the final encoder state through the whole input."""
    B, m, _ = xs.shape
    gs = g_last
    for i in range(m - 1, -1, -1):
        s = states[:, i]
        s_prev = states[:, i - 1] if i > 0 else np.zeros_like(s)
        ga = gs * (1 - s * s)
        grads[f"{prefix}.w_in"] += ga.T @ xs[:, i]
        grads[f"{prefix}.w_rec"] += ga.T @ s_prev
        grads[f"{prefix}.b"] += ga.sum(axis=0)
        gs = ga @ cell.w_rec


def bptt_seq2seq(model: Seq2SeqModel, xs, ys) -> tuple[float, Gradients]:
    """Loss and exact gradients of the traditional network on a sample or batch."""
    xs, ys = _batch(xs, ys)
    B, k = ys.shape[0], ys.shape[1]
    enc, dec, pred = model.encoder, model.decoder, model.predictor

    states = nn.encode(enc, xs)
    ctx = states[:, -1]
    sig = nn.decode_traditional(model, ctx, k)
    out = nn.predictor_apply(pred, sig)
    diff = out - ys
    loss = float(np.mean(np.sum(diff ** 2, axis=-1)))

    grads = nn.zeros_like_params(model)
    gout = 2.0 * diff / (B * k)
    grads["predictor.w"] += np.einsum("bkd,bkn->dn", gout, sig)
    grads["predictor.b"] += gout.sum(axis=(0, 1))
    gsig_all = gout @ pred.w

    g_ctx = np.zeros_like(ctx)
    g_carry = np.zeros((B, model.n2))
    for i in range(k - 1, -1, -1):
        s = sig[:, i]
        s_prev = sig[:, i - 1] if i > 0 else np.zeros_like(s)
        ga = (gsig_all[:, i] + g_carry) * (1 - s * s)
        grads["decoder.w_in"] += ga.T @ ctx
        grads["decoder.w_rec"] += ga.T @ s_prev
        grads["decoder.b"] += ga.sum(axis=0)
        g_ctx += ga @ dec.w_in
        g_carry = ga @ dec.w_rec

    _encoder_backward(enc, xs, states, g_ctx, grads, "encoder")
    return loss, grads


def bptt_ml(model: MlModel, xs, ys, detach_feedback: bool = False) -> tuple[float, Gradients]:
    """Loss and gradients of the closed-loop rollout.

    Credit flows through both arguments of the recurrence: the fed-back
    prediction P(s) and the carried state. ``detach_feedback`` drops the
    first path and exists only for comparison.
    """
    xs, ys = _batch(xs, ys)
    B, k = ys.shape[0], ys.shape[1]
    cell, pred = model.cell, model.predictor

    states = nn.encode(cell, xs)
    h = [states[:, -1]]  # h[j] is s_{m+j}
    outs = []
    for j in range(k):
        y = nn.predictor_apply(pred, h[j])
        outs.append(y)
        if j + 1 < k:
            h.append(nn.cell_step(cell, y, h[j]))
    out = np.stack(outs, axis=1)
    diff = out - ys
    loss = float(np.mean(np.sum(diff ** 2, axis=-1)))

    grads = nn.zeros_like_params(model)
    gout = 2.0 * diff / (B * k)
    gh = np.zeros((B, model.n))  # gradient w.r.t. h[j] from later steps
    for j in range(k - 1, -1, -1):
        gy = gout[:, j].copy()
        if j + 1 < k:
            hn = h[j + 1]
            ga = gh * (1 - hn * hn)
            grads["cell.w_in"] += ga.T @ outs[j]
            grads["cell.w_rec"] += ga.T @ h[j]
            grads["cell.b"] += ga.sum(axis=0)
            if not detach_feedback:
                gy += ga @ cell.w_in
            gh = ga @ cell.w_rec
        else:
            gh = np.zeros_like(gh)
        grads["predictor.w"] += gy.T @ h[j]
        grads["predictor.b"] += gy.sum(axis=0)
        gh = gh + gy @ pred.w

    _encoder_backward(cell, xs, states, gh, grads, "cell")
    return loss, grads


def bptt(model, xs, ys):
    if isinstance(model, MlModel):
        return bptt_ml(model, xs, ys)
    return bptt_seq2seq(model, xs, ys)


def forward_loss(model, xs, ys) -> float:
    """Loss of the same forward pass that ``bptt`` differentiates."""
    xs, k = np.asarray(xs, dtype=np.float64), np.shape(ys)[-2]
    if isinstance(model, MlModel):
        return loss_mse(nn.ml_rollout(model, xs, k), ys)
    return loss_mse(nn.predict_traditional(model, xs, k), ys)


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, flat: dict) -> "AdamState":
        return cls({key: np.zeros_like(a) for key, a in flat.items()},
                   {key: np.zeros_like(a) for key, a in flat.items()}, 0)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.2
    seed: int = 0
    shuffle: bool = True
    clip_norm: float | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.val_fraction < 1:
            raise ValueError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def adam_step(flat: dict, grads: dict, state: AdamState, config) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update. Returns new parameter dict and state."""
    if flat.keys() != grads.keys():
        raise ShapeError("gradient keys do not match parameters")
    t = state.t + 1
    bc1 = 1 - config.beta1 ** t
    bc2 = 1 - config.beta2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for key, p in flat.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"{key}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = config.beta1 * state.m[key] + (1 - config.beta1) * g
        v = config.beta2 * state.v[key] + (1 - config.beta2) * g * g
        new_p[key] = p - config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        new_m[key], new_v[key] = m, v
    return new_p, AdamState(new_m, new_v, t)


def clip_gradients(grads: dict, max_norm: float) -> dict:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm or total == 0:
        return grads
    return {key: g * (max_norm / total) for key, g in grads.items()}


# ---------------------------------------------------------------- training loop

@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)

    def rows(self):
        return [(i + 1, tr, va) for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss))]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for epoch, tr, va in self.rows():
                w.writerow([epoch, repr(tr), repr(va)])


def split_indices(n: int, val_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then the last ``val_fraction`` is held out."""
    order = rng.permutation(n)
    n_val = int(round(n * val_fraction))
    n_val = min(max(n_val, 1 if n > 1 else 0), n - 1)
    return order[: n - n_val], order[n - n_val:]


def train(model, dataset, config: TrainConfig):
    """Minibatch Adam over ``dataset``; returns (trained model, History).

    ``dataset`` needs ``inputs`` (N, m, d) and ``targets`` (N, k, d) arrays.
    """
    xs, ys = np.asarray(dataset.inputs), np.asarray(dataset.targets)
    if len(xs) == 0:
        raise ValueError("cannot train on an empty dataset")
    if xs.shape[0] != ys.shape[0] or xs.shape[-1] != model.d or ys.shape[-1] != model.d:
        raise ShapeError(f"dataset shapes {xs.shape} / {ys.shape} do not fit model dims {model.dims()}")

    rng = make_rng(config.seed, "train")
    tr_idx, va_idx = split_indices(len(xs), config.val_fraction, rng)
    flat = nn.params(model)
    state = AdamState.zeros(flat)
    hist = History()
    for epoch in range(config.epochs):
        order = rng.permutation(tr_idx) if config.shuffle else tr_idx
        for start in range(0, len(order), config.batch_size):
            idx = order[start: start + config.batch_size]
            _, grads = bptt(model, xs[idx], ys[idx])
            if config.clip_norm is not None:
                grads = clip_gradients(grads, config.clip_norm)
            flat, state = adam_step(flat, grads, state, config)
            model = nn.with_params(model, flat)
        hist.train_loss.append(forward_loss(model, xs[tr_idx], ys[tr_idx]))
        hist.val_loss.append(forward_loss(model, xs[va_idx], ys[va_idx]) if len(va_idx) else float("nan"))
        log.debug("epoch %d train %.6g val %.6g", epoch + 1, hist.train_loss[-1], hist.val_loss[-1])
    return model, hist


# ---------------------------------------------------------------- gradient check

def numeric_gradients(loss_fn, model, eps: float = 1e-5, keys=None) -> dict:
    """Central finite differences of ``loss_fn(model)`` over every parameter."""
    flat = nn.params(model)
    out = {}
    for key, arr in flat.items():
        if keys is not None and key not in keys:
            continue
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            plus, minus = arr.copy(), arr.copy()
            plus[idx] += eps
            minus[idx] -= eps
            lp = loss_fn(nn.with_params(model, {**flat, key: plus}))
            lm = loss_fn(nn.with_params(model, {**flat, key: minus}))
            g[idx] = (lp - lm) / (2 * eps)
        out[key] = g
    return out


def relative_error(analytic: dict, numeric: dict, floor: float = 1e-8) -> float:
    """Worst |a - n| / max(|a| + |n|, floor) over all entries."""
    worst = 0.0
    for key, num in numeric.items():
        a = analytic[key]
        denom = np.maximum(np.abs(a) + np.abs(num), floor)
        worst = max(worst, float(np.max(np.abs(a - num) / denom)))
    return worst


def grad_check(model, xs, ys, eps: float = 1e-5) -> float:
    if eps <= 0:
        raise ValueError("eps must be positive")
    _, analytic = bptt(model, xs, ys)
    numeric = numeric_gradients(lambda mdl: forward_loss(mdl, xs, ys), model, eps)
    return relative_error(analytic, numeric)
