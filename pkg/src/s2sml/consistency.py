"""Decoder consistency residual, round identities, and residual-driven decoder tuning.

For a well trained encoder/decoder pair the two ways of predicting the
element two steps ahead agree, which ties the decoder to the encoder and
predictor:

    F2(s, F2(s, 0)) == F2(F1(P(F2(s, 0)), s), 0)

``residual`` returns left minus right for a hidden state s.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .linalg import Rng, ShapeError
from .nn import Seq2SeqModel
from .train import AdamState, adam_step


def residual(model: Seq2SeqModel, s: np.ndarray) -> np.ndarray:
    if s.shape[-1] != model.n1:
        raise ShapeError(f"hidden state dim {s.shape[-1]} != n1={model.n1}")
    zero = np.zeros(s.shape[:-1] + (model.n2,))
    sigma1 = nn.cell_step(model.decoder, s, zero)
    lhs = nn.cell_step(model.decoder, s, sigma1)
    s_next = nn.cell_step(model.encoder, nn.predictor_apply(model.predictor, sigma1), s)
    rhs = nn.cell_step(model.decoder, s_next, zero)
    return lhs - rhs


@dataclass
class HiddenStateSet:
    states: np.ndarray                 # (count, n1)
    sample_index: np.ndarray           # dataset row each state came from
    position: np.ndarray               # 1-based position i of s_i in its sequence

    def __len__(self):
        return len(self.states)


def harvest_states(encoder: nn.RnnCellParams, dataset, limit: int, rng: Rng | None = None,
                   extended: bool = False) -> HiddenStateSet:
    """Encode up to ``limit`` dataset inputs and collect hidden states.

    By default only the final state s_m of each input is kept. With
    ``extended`` the input is continued with its first k-1 ground-truth
    targets and s_m..s_{m+k-1} are kept.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    n = len(dataset.inputs)
    if n == 0:
        raise ValueError("cannot harvest from an empty dataset")
    take = min(limit, n)
    rows = np.sort(rng.choice(n, size=take, replace=False)) if rng is not None else np.arange(take)
    xs = np.asarray(dataset.inputs)[rows]
    m = xs.shape[1]
    if extended:
        ys = np.asarray(dataset.targets)[rows]
        seq = np.concatenate([xs, ys[:, :-1]], axis=1)
        st = nn.encode(encoder, seq)[:, m - 1:]
        per = st.shape[1]
        return HiddenStateSet(
            st.reshape(-1, encoder.n),
            np.repeat(rows, per),
            np.tile(np.arange(m, m + per), take),
        )
    st = nn.encode(encoder, xs)[:, -1]
    return HiddenStateSet(st, rows, np.full(take, m))


@dataclass
class ConsistencyReport:
    norms: np.ndarray
    mean: float
    median: float
    max: float
    quantiles: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.norms)

    def summary(self) -> dict:
        return {"count": self.count, "mean": self.mean, "median": self.median, "max": self.max,
                "quantiles": {str(q): v for q, v in self.quantiles.items()}}

    def to_files(self, csv_path, json_path, extra: dict | None = None) -> None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["state_index", "residual_norm"])
            for i, v in enumerate(self.norms):
                w.writerow([i, repr(float(v))])
        with open(json_path, "w") as fh:
            json.dump({**self.summary(), **(extra or {})}, fh, indent=2, sort_keys=True)
            fh.write("\n")


QUANTILES = (0.1, 0.25, 0.75, 0.9, 0.99)


def consistency_stats(model: Seq2SeqModel, states: HiddenStateSet | np.ndarray) -> ConsistencyReport:
    st = states.states if isinstance(states, HiddenStateSet) else np.asarray(states)
    if len(st) == 0:
        raise ValueError("empty state set")
    norms = np.linalg.norm(residual(model, st), axis=-1)
    return ConsistencyReport(
        norms=norms,
        mean=float(np.mean(norms)),
        median=float(np.median(norms)),
        max=float(np.max(norms)),
        quantiles={q: float(np.quantile(norms, q)) for q in QUANTILES},
    )


# ---------------------------------------------------------------- round identities

@dataclass
class RoundIdentityReport:
    x2_round1: np.ndarray     # x_{m+2} from round 1 mechanics
    x2_round1_nested: np.ndarray
    x2_round2: np.ndarray     # x_{m+2} from round 2 mechanics
    x2_round2_nested: np.ndarray
    identity1_error: float
    identity2_error: float
    gap: float                # |x_{m+2}^1 - x_{m+2}^2|, zero only for an ideal network


def verify_round_identities(model: Seq2SeqModel, xs: np.ndarray) -> RoundIdentityReport:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise ShapeError("verify_round_identities takes a single (m, d) input sequence")
    rounds = nn.ew_single_step_rounds(model, xs, max(model.k, 2), 2)
    x1_rounds, x2_rounds = rounds[0, 1], rounds[1, 0]

    f1, f2, p = model.encoder, model.decoder, model.predictor
    s_m = nn.encode(f1, xs)[-1]
    zero = np.zeros(model.n2)
    x1_nested = nn.predictor_apply(p, nn.cell_step(f2, s_m, nn.cell_step(f2, s_m, zero)))
    s_next = nn.cell_step(f1, nn.predictor_apply(p, nn.cell_step(f2, s_m, zero)), s_m)
    x2_nested = nn.predictor_apply(p, nn.cell_step(f2, s_next, zero))

    return RoundIdentityReport(
        x2_round1=x1_rounds,
        x2_round1_nested=x1_nested,
        x2_round2=x2_rounds,
        x2_round2_nested=x2_nested,
        identity1_error=float(np.max(np.abs(x1_rounds - x1_nested))),
        identity2_error=float(np.max(np.abs(x2_rounds - x2_nested))),
        gap=float(np.linalg.norm(x1_rounds - x2_rounds)),
    )


# ---------------------------------------------------------------- decoder tuning

def residual_objective(model: Seq2SeqModel, states: np.ndarray) -> float:
    r = residual(model, states)
    return float(np.mean(np.sum(r * r, axis=-1)))


def residual_grad(model: Seq2SeqModel, states: np.ndarray) -> tuple[float, dict]:
    """Objective mean ||residual||^2 and its gradient w.r.t. the decoder only.

    Every occurrence of the decoder is differentiated, including the one
    feeding the encoder through the predictor.
    """
    s = np.asarray(states, dtype=np.float64)
    f1, f2, p = model.encoder, model.decoder, model.predictor
    zero = np.zeros((len(s), model.n2))
    sig1 = nn.cell_step(f2, s, zero)
    lhs = nn.cell_step(f2, s, sig1)
    y = nn.predictor_apply(p, sig1)
    s_next = nn.cell_step(f1, y, s)
    rhs = nn.cell_step(f2, s_next, zero)
    r = lhs - rhs
    obj = float(np.mean(np.sum(r * r, axis=-1)))

    gr = 2.0 * r / len(s)
    g_w_in = np.zeros_like(f2.w_in)
    g_w_rec = np.zeros_like(f2.w_rec)
    g_b = np.zeros_like(f2.b)

    ga = gr * (1 - lhs * lhs)
    g_w_in += ga.T @ s
    g_w_rec += ga.T @ sig1
    g_b += ga.sum(axis=0)
    g_sig1 = ga @ f2.w_rec

    ga = -gr * (1 - rhs * rhs)
    g_w_in += ga.T @ s_next
    g_b += ga.sum(axis=0)
    g_snext = ga @ f2.w_in
    g_y = (g_snext * (1 - s_next * s_next)) @ f1.w_in
    g_sig1 += g_y @ p.w

    ga = g_sig1 * (1 - sig1 * sig1)
    g_w_in += ga.T @ s
    g_b += ga.sum(axis=0)
    return obj, {"decoder.w_in": g_w_in, "decoder.w_rec": g_w_rec, "decoder.b": g_b}


@dataclass
class TuneConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def tune_decoder(model: Seq2SeqModel, states: HiddenStateSet | np.ndarray, steps: int,
                 config: TuneConfig | None = None) -> tuple[Seq2SeqModel, list[float]]:
    """Full-batch Adam on the decoder against the consistency residual.

    Encoder and predictor are left untouched. The history holds the objective
    before the first step and after every step (``steps + 1`` values).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    config = config or TuneConfig()
    st = states.states if isinstance(states, HiddenStateSet) else np.asarray(states)
    if len(st) == 0:
        raise ValueError("empty state set")
    flat = {key: v for key, v in nn.params(model).items() if key.startswith("decoder.")}
    adam = AdamState.zeros(flat)
    history = []
    for _ in range(steps):
        obj, grads = residual_grad(model, st)
        history.append(obj)
        flat, adam = adam_step(flat, grads, adam, config)
        model = nn.with_params(model, flat)
    history.append(residual_objective(model, st))
    return model, history
