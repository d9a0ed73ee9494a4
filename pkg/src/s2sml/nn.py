"""Vanilla tanh recurrent cells, the affine predictor, and forward passes.

Every op accepts either single sequences or batches. Vectors carry their
feature axis last; sequences put time on axis -2, so a single input sequence
is ``(m, d)`` and a batch is ``(B, m, d)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .linalg import Rng, ShapeError

FORMAT_VERSION = 1


@dataclass(frozen=True)
class RnnCellParams:
    w_in: np.ndarray   # (n, d_in)
    w_rec: np.ndarray  # (n, n)
    b: np.ndarray      # (n,)

    def __post_init__(self):
        n = self.w_rec.shape[0]
        if self.w_in.ndim != 2 or self.w_rec.shape != (n, n) or self.b.shape != (n,) or self.w_in.shape[0] != n:
            raise ShapeError(
                f"inconsistent cell shapes w_in={self.w_in.shape} w_rec={self.w_rec.shape} b={self.b.shape}")

    @property
    def n(self) -> int:
        return self.w_rec.shape[0]

    @property
    def d_in(self) -> int:
        return self.w_in.shape[1]


@dataclass(frozen=True)
class PredictorParams:
    w: np.ndarray  # (d, n)
    b: np.ndarray  # (d,)

    def __post_init__(self):
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ShapeError(f"inconsistent predictor shapes w={self.w.shape} b={self.b.shape}")


@dataclass(frozen=True)
class Seq2SeqModel:
    """Encoder F1 (input d, n1 states), decoder F2 (input n1, n2 states), predictor P."""

    encoder: RnnCellParams
    decoder: RnnCellParams
    predictor: PredictorParams
    m: int
    k: int

    arch = "seq2seq"

    def __post_init__(self):
        if self.decoder.d_in != self.encoder.n:
            raise ShapeError(f"decoder input dim {self.decoder.d_in} != encoder state dim {self.encoder.n}")
        if self.predictor.w.shape[1] != self.decoder.n:
            raise ShapeError(f"predictor input dim {self.predictor.w.shape[1]} != decoder state dim {self.decoder.n}")
        if self.predictor.w.shape[0] != self.encoder.d_in:
            raise ShapeError("predictor output dim must equal the element dim d")

    @property
    def d(self) -> int:
        return self.encoder.d_in

    @property
    def n1(self) -> int:
        return self.encoder.n

    @property
    def n2(self) -> int:
        return self.decoder.n

    @property
    def ratio(self) -> float:
        return self.n1 / self.n2

    def dims(self) -> dict:
        return {"d": self.d, "n1": self.n1, "n2": self.n2, "m": self.m, "k": self.k}


@dataclass(frozen=True)
class MlModel:
    """Single recurrent cell F with predictor P, rolled out in closed loop."""

    cell: RnnCellParams
    predictor: PredictorParams
    m: int
    k: int

    arch = "ml"

    def __post_init__(self):
        if self.predictor.w.shape[1] != self.cell.n:
            raise ShapeError(f"predictor input dim {self.predictor.w.shape[1]} != cell state dim {self.cell.n}")
        if self.predictor.w.shape[0] != self.cell.d_in:
            raise ShapeError("predictor output dim must equal the cell input dim d")

    @property
    def d(self) -> int:
        return self.cell.d_in

    @property
    def n(self) -> int:
        return self.cell.n

    def dims(self) -> dict:
        return {"d": self.d, "n": self.n, "m": self.m, "k": self.k}


# ---------------------------------------------------------------- parameters

def params(model) -> dict[str, np.ndarray]:
    """Flat ``{"encoder.w_in": array, ...}`` view of a model's parameters."""
    out = {}
    for f in fields(model):
        part = getattr(model, f.name)
        if isinstance(part, (RnnCellParams, PredictorParams)):
            for g in fields(part):
                out[f"{f.name}.{g.name}"] = getattr(part, g.name)
    return out


def with_params(model, flat: dict[str, np.ndarray]):
    """Return a copy of ``model`` with parameters taken from ``flat``."""
    parts = {}
    for f in fields(model):
        part = getattr(model, f.name)
        if isinstance(part, (RnnCellParams, PredictorParams)):
            upd = {g.name: np.asarray(flat[f"{f.name}.{g.name}"], dtype=np.float64)
                   for g in fields(part) if f"{f.name}.{g.name}" in flat}
            for name, arr in upd.items():
                if arr.shape != getattr(part, name).shape:
                    raise ShapeError(f"{f.name}.{name}: shape {arr.shape} != {getattr(part, name).shape}")
            parts[f.name] = replace(part, **upd)
    return replace(model, **parts)


def zeros_like_params(model) -> dict[str, np.ndarray]:
    return {key: np.zeros_like(v) for key, v in params(model).items()}


def init_cell(n: int, d_in: int, rng: Rng) -> RnnCellParams:
    a_in, a_rec = 1 / math.sqrt(d_in), 1 / math.sqrt(n)
    return RnnCellParams(
        w_in=rng.uniform(-a_in, a_in, (n, d_in)),
        w_rec=rng.uniform(-a_rec, a_rec, (n, n)),
        b=rng.uniform(-a_rec, a_rec, n),
    )


def init_predictor(d: int, n: int, rng: Rng) -> PredictorParams:
    a = 1 / math.sqrt(n)
    return PredictorParams(w=rng.uniform(-a, a, (d, n)), b=rng.uniform(-a, a, d))


def init_seq2seq(d: int, n1: int, n2: int, m: int, k: int, rng: Rng) -> Seq2SeqModel:
    return Seq2SeqModel(init_cell(n1, d, rng), init_cell(n2, n1, rng), init_predictor(d, n2, rng), m, k)


def init_ml(d: int, n: int, m: int, k: int, rng: Rng) -> MlModel:
    return MlModel(init_cell(n, d, rng), init_predictor(d, n, rng), m, k)


def zero_cell(n: int, d_in: int) -> RnnCellParams:
    return RnnCellParams(np.zeros((n, d_in)), np.zeros((n, n)), np.zeros(n))


def zero_predictor(d: int, n: int, bias=None) -> PredictorParams:
    b = np.zeros(d) if bias is None else np.asarray(bias, dtype=np.float64)
    return PredictorParams(np.zeros((d, n)), b)


# ---------------------------------------------------------------- forward ops

def cell_step(cell: RnnCellParams, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """One tanh recurrence: tanh(w_in x + w_rec s + b)."""
    if x.shape[-1] != cell.d_in or s.shape[-1] != cell.n:
        raise ShapeError(f"cell expects input dim {cell.d_in} and state dim {cell.n}, "
                         f"got x{x.shape} s{s.shape}")
    return np.tanh(x @ cell.w_in.T + s @ cell.w_rec.T + cell.b)


def encode(cell: RnnCellParams, xs: np.ndarray, s0: np.ndarray | None = None) -> np.ndarray:
    """Run ``cell`` over the time axis of ``xs`` from a zero state.

    Returns the states s_1..s_m with the same leading shape as ``xs``.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim < 2 or xs.shape[-2] == 0:
        raise ValueError("encode needs a non-empty input sequence")
    s = np.zeros(xs.shape[:-2] + (cell.n,)) if s0 is None else s0
    states = np.empty(xs.shape[:-1] + (cell.n,))
    for i in range(xs.shape[-2]):
        s = cell_step(cell, xs[..., i, :], s)
        states[..., i, :] = s
    return states


def decode_traditional(model: Seq2SeqModel, s_ctx: np.ndarray, k: int) -> np.ndarray:
    """Feed the same context ``s_ctx`` into the decoder ``k`` times."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if s_ctx.shape[-1] != model.n1:
        raise ShapeError(f"context dim {s_ctx.shape[-1]} != n1={model.n1}")
    sigma = np.zeros(s_ctx.shape[:-1] + (model.n2,))
    out = np.empty(s_ctx.shape[:-1] + (k, model.n2))
    for i in range(k):
        sigma = cell_step(model.decoder, s_ctx, sigma)
        out[..., i, :] = sigma
    return out


def predictor_apply(p: PredictorParams, state: np.ndarray) -> np.ndarray:
    if state.shape[-1] != p.w.shape[1]:
        raise ShapeError(f"predictor expects state dim {p.w.shape[1]}, got {state.shape}")
    return state @ p.w.T + p.b


def _predict_each(p: PredictorParams, states: np.ndarray) -> np.ndarray:
    # one state at a time so results match P(sigma) applied to a lone vector bit for bit
    out = np.empty(states.shape[:-1] + (p.w.shape[0],))
    for i in range(states.shape[-2]):
        out[..., i, :] = predictor_apply(p, states[..., i, :])
    return out


def predict_traditional(model: Seq2SeqModel, xs: np.ndarray, k: int | None = None) -> np.ndarray:
    """Encode ``xs``, decode k steps from s_m, map every decoder state through P."""
    k = model.k if k is None else k
    s_m = encode(model.encoder, xs)[..., -1, :]
    return _predict_each(model.predictor, decode_traditional(model, s_m, k))


def predict_traditional_rounds(model: Seq2SeqModel, xs: np.ndarray, k: int | None, p: int) -> np.ndarray:
    """Expanding-window recursion: p rounds of k predictions each.

    Every round appends all its k predictions to the input and re-encodes.
    Encoding the grown sequence repeats s_1..s_m exactly, so the encoder is
    continued from the previous final state instead of restarting.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    k = model.k if k is None else k
    xs = np.asarray(xs, dtype=np.float64)
    s = encode(model.encoder, xs)[..., -1, :]
    rounds = []
    for j in range(p):
        preds = _predict_each(model.predictor, decode_traditional(model, s, k))
        rounds.append(preds)
        if j + 1 < p:
            s = encode(model.encoder, preds, s0=s)[..., -1, :]
    return np.concatenate(rounds, axis=-2)


def ew_single_step_rounds(model: Seq2SeqModel, xs: np.ndarray, k: int | None, rounds: int) -> np.ndarray:
    """Expanding window growing by one element per round.

    Round j+1 re-encodes the input of round j extended by round j's first
    prediction. Returns shape ``(..., rounds, k, d)``.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    k = model.k if k is None else k
    seq = np.asarray(xs, dtype=np.float64)
    out = []
    for _ in range(rounds):
        preds = predict_traditional(model, seq, k)
        out.append(preds)
        seq = np.concatenate([seq, preds[..., :1, :]], axis=-2)
    return np.stack(out, axis=-3)


def ml_rollout(model: MlModel, xs: np.ndarray, horizon: int | None = None) -> np.ndarray:
    """Closed-loop prediction: x_{i+1} = P(s_i), s_{i+1} = F(x_{i+1}, s_i).

    Only the current state is carried between steps.
    """
    horizon = model.k if horizon is None else horizon
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    s = encode(model.cell, xs)[..., -1, :]
    out = np.empty(s.shape[:-1] + (horizon, model.d))
    for i in range(horizon):
        x = predictor_apply(model.predictor, s)
        out[..., i, :] = x
        if i + 1 < horizon:
            s = cell_step(model.cell, x, s)
    return out


def predict(model, xs: np.ndarray, horizon: int) -> np.ndarray:
    """Predict ``horizon`` points with whichever engine fits the model."""
    if isinstance(model, MlModel):
        return ml_rollout(model, xs, horizon)
    p = -(-horizon // model.k)
    return predict_traditional_rounds(model, xs, model.k, p)[..., :horizon, :]


# ---------------------------------------------------------------- persistence

def model_to_dict(model) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "arch": model.arch,
        "dims": model.dims(),
        "arrays": {key: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
                   for key, v in params(model).items()},
    }


def model_from_dict(doc: dict):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    arrays = {key: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
              for key, v in doc["arrays"].items()}

    def cell(prefix):
        return RnnCellParams(arrays[f"{prefix}.w_in"], arrays[f"{prefix}.w_rec"], arrays[f"{prefix}.b"])

    pred = PredictorParams(arrays["predictor.w"], arrays["predictor.b"])
    dims = doc["dims"]
    if doc["arch"] == "seq2seq":
        return Seq2SeqModel(cell("encoder"), cell("decoder"), pred, dims["m"], dims["k"])
    if doc["arch"] == "ml":
        return MlModel(cell("cell"), pred, dims["m"], dims["k"])
    raise ValueError(f"unknown arch {doc['arch']!r}")


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
