"""Experiment configuration: scale presets, JSON config files, CLI overrides."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

from .signals import SIGNAL_KINDS, SignalConfig
from .train import TrainConfig

RATIO_FRACTIONS = (1 / 10, 1 / 5, 1 / 4, 1 / 3, 1 / 2, 2 / 3, 3 / 4, 4 / 5, 9 / 10)


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    scale: str = "desk"
    signal: str = "both"
    noise: float = 0.15
    n_points: int = 20000
    m: int = 70
    k: int = 10
    per_kind: int = 400
    n_grid: list = field(default_factory=lambda: [50])
    n: int = 50
    n1: int | None = None
    n1_values: list | None = None
    ratio_points: int = 3
    kp: list = field(default_factory=lambda: [10, 40])
    trials: int = 100
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-3
    clip_norm: float | None = None
    arch: str = "seq2seq"
    data: str | None = None
    harvest_limit: int = 500
    harvest_extended: bool = False
    tune_steps: int = 0
    tune_lr: float = 1e-4
    windows: int = 2

    def validate(self) -> "ExperimentConfig":
        if self.scale not in ("desk", "paper"):
            raise ValueError(f"scale must be 'desk' or 'paper', got {self.scale!r}")
        if self.signal not in SIGNAL_KINDS + ("both",):
            raise ValueError(f"signal must be sine, trapezoid or both, got {self.signal!r}")
        if self.arch not in ("seq2seq", "ml"):
            raise ValueError(f"arch must be seq2seq or ml, got {self.arch!r}")
        if not 20 <= self.m <= 80:
            raise ValueError(f"m must lie in [20, 80], got {self.m}")
        for name in ("n_points", "k", "per_kind", "n", "ratio_points", "trials", "epochs",
                     "batch_size", "harvest_limit", "windows"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if any(v < 2 for v in self.n_grid):
            raise ValueError("every n in n_grid must be >= 2")
        if any(v < 1 for v in self.kp):
            raise ValueError("kp values must be positive")
        if self.tune_steps < 0:
            raise ValueError("tune_steps must be >= 0")
        return self

    @property
    def kinds(self) -> list[str]:
        return list(SIGNAL_KINDS) if self.signal == "both" else [self.signal]

    def signal_configs(self) -> list[SignalConfig]:
        return [SignalConfig(kind=kind, noise=self.noise, n_points=self.n_points) for kind in self.kinds]

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           seed=seed, clip_norm=self.clip_norm)

    def p_for(self, kp: int) -> int:
        return -(-kp // self.k)

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "desk": dict(scale="desk", per_kind=400, epochs=10, batch_size=8, ratio_points=3,
                 trials=100, n_grid=[50]),
    "paper": dict(scale="paper", per_kind=4000, epochs=50, batch_size=32, ratio_points=9,
                  trials=1000, n_grid=[50, 100, 220]),
}


def resolve(scale: str | None = None, config_path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Preset for the scale, then config-file keys, then explicit overrides."""
    file_vals = {}
    if config_path:
        with open(config_path) as fh:
            file_vals = json.load(fh)
        known = {f.name for f in fields(ExperimentConfig)}
        unknown = set(file_vals) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    overrides = {key: v for key, v in (overrides or {}).items() if v is not None}
    scale = overrides.get("scale") or scale or file_vals.get("scale") or "desk"
    if scale not in PRESETS:
        raise ValueError(f"unknown scale {scale!r}")
    vals = {**PRESETS[scale], **file_vals, **overrides, "scale": scale}
    return ExperimentConfig(**vals).validate()


def ratio_grid(n: int, points: int | None = None) -> list[int]:
    """Encoder sizes n1 for a total budget n, ascending, each leaving n2 >= 1.

    Points are the fractions 1/10 .. 9/10 of n rounded to integers; with
    ``points`` < 9 the grid is subsampled evenly keeping both ends.
    """
    vals = []
    for frac in RATIO_FRACTIONS:
        n1 = min(max(int(round(frac * n)), 1), n - 1)
        if n1 not in vals:
            vals.append(n1)
    if points is not None and points < len(vals):
        if points == 1:
            return [vals[len(vals) // 2]]
        pick = [round(i * (len(vals) - 1) / (points - 1)) for i in range(points)]
        vals = [vals[i] for i in dict.fromkeys(pick)]
    return vals


def log_ratio(n1: int, n2: int) -> float:
    return math.log(n1 / n2)
