"""Noisy phase-modulated sine and trapezoid waves, windowing, and dataset files."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import Rng, make_rng

SIGNAL_KINDS = ("sine", "trapezoid")


@dataclass(frozen=True)
class SignalConfig:
    kind: str = "sine"
    noise: float = 0.15          # a
    offset: float = 0.0          # A0
    amplitude: float = 1.0       # A
    period: float = 1.0          # T
    mod_depth: float = 2.0       # Delta
    mod_period: float = 10.0     # s_mod
    rise: float = 0.1
    top: float = 0.4
    fall: float = 0.1
    rest: float = 0.4
    dt: float = 0.01
    n_points: int = 20000

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.dt <= 0 or self.n_points < 1 or self.noise < 0:
            raise ValueError("need dt > 0, n_points >= 1 and noise >= 0")
        if self.mod_period <= 0 or self.period <= 0:
            raise ValueError("periods must be positive")
        if self.kind == "trapezoid":
            total = self.rise + self.top + self.fall + self.rest
            if not math.isclose(total, self.period, rel_tol=1e-12, abs_tol=1e-12):
                raise ValueError(f"trapezoid segments sum to {total}, period is {self.period}")
            if self.rise <= 0 or self.fall <= 0:
                raise ValueError("trapezoid rise and fall must be positive")


@dataclass(frozen=True)
class Series:
    config: SignalConfig
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if len(self.values) != self.config.n_points:
            raise ValueError(f"series length {len(self.values)} != n_points {self.config.n_points}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(1, len(self.values) + 1) * self.config.dt


def phase_warp(t, depth: float, mod_period: float):
    """t + depth * sin(2 pi t / mod_period)."""
    if mod_period <= 0:
        raise ValueError("mod_period must be positive")
    return t + depth * np.sin(2 * np.pi * t / mod_period)


def sine_shape(t, cfg: SignalConfig):
    return cfg.amplitude * np.sin(2 * np.pi * phase_warp(t, cfg.mod_depth, cfg.mod_period) / cfg.period)


def trapezoid_shape(t, cfg: SignalConfig):
    """One trapezoid period evaluated at the warped time reduced modulo T."""
    tau = np.mod(phase_warp(np.asarray(t, dtype=np.float64), cfg.mod_depth, cfg.mod_period), cfg.period)
    r, w, f = cfg.rise, cfg.top, cfg.fall
    a = cfg.amplitude
    return np.select(
        [tau < r, tau < r + w, tau < r + w + f],
        [a * tau / r, np.full_like(tau, a), a * (r + w + f - tau) / f],
        0.0,
    )


def _generate(cfg: SignalConfig, rng: Rng, shape) -> Series:
    t = np.arange(1, cfg.n_points + 1) * cfg.dt
    clean = cfg.offset + shape(t, cfg)
    noise = rng.standard_normal(cfg.n_points)
    return Series(cfg, cfg.noise * noise + clean)


def gen_sine(cfg: SignalConfig, rng: Rng) -> Series:
    if cfg.kind != "sine":
        raise ValueError("gen_sine needs kind='sine'")
    return _generate(cfg, rng, sine_shape)


def gen_trapezoid(cfg: SignalConfig, rng: Rng) -> Series:
    if cfg.kind != "trapezoid":
        raise ValueError("gen_trapezoid needs kind='trapezoid'")
    return _generate(cfg, rng, trapezoid_shape)


def generate(cfg: SignalConfig, seed: int) -> Series:
    rng = make_rng(seed, "signal", cfg.kind)
    gen = gen_sine if cfg.kind == "sine" else gen_trapezoid
    s = gen(cfg, rng)
    return Series(s.config, s.values, seed)


# ---------------------------------------------------------------- samples

@dataclass(frozen=True)
class Sample:
    input: np.ndarray   # (m, d)
    target: np.ndarray  # (k, d)
    kind: str
    start: int          # 1-based index of the first input point


@dataclass
class Dataset:
    inputs: np.ndarray   # (N, m, d)
    targets: np.ndarray  # (N, k, d)
    kinds: list = field(default_factory=list)
    starts: list = field(default_factory=list)

    def __len__(self):
        return len(self.inputs)

    def __getitem__(self, i) -> Sample:
        return Sample(self.inputs[i], self.targets[i], self.kinds[i], int(self.starts[i]))

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        samples = list(samples)
        if not samples:
            raise ValueError("no samples")
        return cls(
            np.stack([s.input for s in samples]),
            np.stack([s.target for s in samples]),
            [s.kind for s in samples],
            [s.start for s in samples],
        )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.inputs[idx], self.targets[idx],
                       [self.kinds[i] for i in idx], [self.starts[i] for i in idx])

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for s in map(self.__getitem__, range(len(self))):
                fh.write(json.dumps({
                    "kind": s.kind,
                    "p": s.start,
                    "input": s.input.tolist(),
                    "target": s.target.tolist(),
                }) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "Dataset":
        samples = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                samples.append(Sample(_as_seq(rec["input"]), _as_seq(rec["target"]), rec["kind"], rec["p"]))
        return cls.from_samples(samples)


def _as_seq(values) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def window(series: Series, start: int, m: int, k: int) -> Sample:
    """Input = points start..start+m-1, target = the next k points (1-based)."""
    v = series.values
    if start < 1 or start + m + k - 1 > len(v):
        raise ValueError(f"window start={start} m={m} k={k} exceeds series of length {len(v)}")
    i0 = start - 1
    return Sample(v[i0:i0 + m, None].copy(), v[i0 + m:i0 + m + k, None].copy(), series.config.kind, start)


def make_windows(series: Series, m: int, k: int, count: int, rng: Rng) -> list[Sample]:
    n = len(series.values)
    if m < 1 or k < 1 or m + k > n:
        raise ValueError(f"window of m={m}, k={k} does not fit a series of {n} points")
    if count < 1:
        raise ValueError("count must be >= 1")
    starts = rng.integers(1, n - m - k + 2, size=count)
    return [window(series, int(p), m, k) for p in starts]


def paper_signal_configs(n_points: int = 20000, noise: float = 0.15) -> dict[str, SignalConfig]:
    return {
        "sine": SignalConfig(kind="sine", noise=noise, n_points=n_points),
        "trapezoid": SignalConfig(kind="trapezoid", noise=noise, n_points=n_points),
    }


def build_dataset(configs, seed: int, m: int = 70, k: int = 10, per_kind: int = 4000):
    """Generate one series per config, cut ``per_kind`` windows from each, merge, shuffle.

    Returns ``(dataset, {kind: series})``.
    """
    series, samples = {}, []
    for cfg in configs:
        s = generate(cfg, seed)
        series[cfg.kind] = s
        samples.extend(make_windows(s, m, k, per_kind, make_rng(seed, "windows", cfg.kind)))
    order = make_rng(seed, "merge").permutation(len(samples))
    return Dataset.from_samples([samples[i] for i in order]), series


def build_paper_dataset(seed: int, m: int = 70, k: int = 10, per_kind: int = 4000,
                        n_points: int = 20000, noise: float = 0.15):
    return build_dataset(paper_signal_configs(n_points, noise).values(), seed, m, k, per_kind)


# ---------------------------------------------------------------- series files

def save_series_csv(series: Series, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(series.times, series.values):
            w.writerow([repr(float(t)), repr(float(v))])


def load_series_csv(path, config: SignalConfig | None = None) -> Series:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    values = np.array([float(r["value"]) for r in rows])
    if config is None:
        dt = float(rows[1]["t"]) - float(rows[0]["t"]) if len(rows) > 1 else float(rows[0]["t"])
        config = SignalConfig(n_points=len(values), dt=dt)
    return Series(config, values)


def config_dict(cfg: SignalConfig) -> dict:
    return asdict(cfg)
