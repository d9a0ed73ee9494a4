"""Training/evaluation pipelines behind the CLI subcommands.

Seeds: every quantity draws from ``make_rng(cfg.seed, <labels>)``. A sweep
cell's seed is ``derive_seed(cfg.seed, "cell", arch, n, n1)``, so the same
(n, n1) cell yields the same model in every sweep that contains it.
Evaluation windows depend only on (seed, signal, kp) and are shared by all
models, which makes comparisons paired.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import consistency, nn, signals
from .config import ExperimentConfig, log_ratio, ratio_grid
from .evaluate import engine, eval_Ep
from .linalg import derive_seed, make_rng
from .train import train

log = logging.getLogger(__name__)

SWEEP_FIELDS = ["experiment", "arch", "signal", "n", "n1", "n2", "r", "ln_r", "kp", "mean_E", "std_E", "seed"]


@dataclass
class SweepResultRow:
    experiment: str
    arch: str
    signal: str
    n: int
    n1: int | None
    n2: int | None
    r: float | None
    ln_r: float | None
    kp: int
    mean_E: float
    std_E: float
    seed: int

    def csv_values(self) -> list:
        return [_fmt(getattr(self, f)) for f in SWEEP_FIELDS]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows, path, fieldnames=SWEEP_FIELDS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for row in rows:
            w.writerow(row.csv_values())


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- data

def data_seed(cfg: ExperimentConfig) -> int:
    return derive_seed(cfg.seed, "data")


def build_training_data(cfg: ExperimentConfig):
    return signals.build_dataset(cfg.signal_configs(), data_seed(cfg), cfg.m, cfg.k, cfg.per_kind)


def training_data(cfg: ExperimentConfig) -> signals.Dataset:
    if cfg.data:
        if not os.path.exists(cfg.data):
            raise FileNotFoundError(f"dataset file {cfg.data} does not exist")
        return signals.Dataset.from_jsonl(cfg.data)
    return build_training_data(cfg)[0]


def eval_series(cfg: ExperimentConfig) -> dict[str, signals.Series]:
    """Fresh series per signal: same shape parameters, independent noise."""
    seed = derive_seed(cfg.seed, "eval")
    return {c.kind: signals.generate(c, seed) for c in cfg.signal_configs()}


# ---------------------------------------------------------------- cells

def cell_seed(cfg: ExperimentConfig, arch: str, n: int, n1: int | None = None) -> int:
    return derive_seed(cfg.seed, "cell", arch, n, 0 if n1 is None else n1)


def train_cell(cfg: ExperimentConfig, data, arch: str, n: int, n1: int | None = None):
    seed = cell_seed(cfg, arch, n, n1)
    init = make_rng(seed, "init")
    d = data.inputs.shape[-1]
    if arch == "ml":
        model = nn.init_ml(d, n, cfg.m, cfg.k, init)
    else:
        if n1 is None or not 1 <= n1 < n:
            raise ValueError(f"need 1 <= n1 < n, got n1={n1}, n={n}")
        model = nn.init_seq2seq(d, n1, n - n1, cfg.m, cfg.k, init)
    model, hist = train(model, data, cfg.train_config(seed))
    return model, hist, seed


def evaluate_model(cfg: ExperimentConfig, model, series: dict) -> dict:
    """``{(signal, kp): EvalReport}`` over the shared evaluation windows."""
    out = {}
    for kind, s in series.items():
        for kp in cfg.kp:
            rng = make_rng(cfg.seed, "eval-windows", kind, kp)
            out[(kind, kp)] = eval_Ep(engine(model), s, cfg.m, cfg.k, cfg.p_for(kp), cfg.trials, rng)
    return out


def _rows_for(experiment, model, reports, n, seed):
    rows = []
    for (kind, kp), rep in reports.items():
        if isinstance(model, nn.MlModel):
            n1 = n2 = r = ln_r = None
        else:
            n1, n2 = model.n1, model.n2
            r, ln_r = n1 / n2, log_ratio(n1, n2)
        rows.append(SweepResultRow(experiment, model.arch, kind, n, n1, n2, r, ln_r, kp, rep.mean, rep.std, seed))
    return rows


def run_cells(cfg: ExperimentConfig, experiment: str, cells) -> list[SweepResultRow]:
    """Train and evaluate each ``(arch, n, n1)`` cell; return all rows."""
    data = training_data(cfg)
    series = eval_series(cfg)
    rows = []
    for arch, n, n1 in cells:
        log.info("%s: training %s n=%d n1=%s", experiment, arch, n, n1)
        model, _, seed = train_cell(cfg, data, arch, n, n1)
        rows.extend(_rows_for(experiment, model, evaluate_model(cfg, model, series), n, seed))
    return rows


def sweep_ratio(cfg: ExperimentConfig) -> list[SweepResultRow]:
    cells = [("seq2seq", n, n1) for n in cfg.n_grid for n1 in ratio_grid(n, cfg.ratio_points)]
    rows = run_cells(cfg, "sweep-ratio", cells)
    return sorted(rows, key=lambda r: (r.signal, r.n, r.kp, r.ln_r))


def n1_grid(cfg: ExperimentConfig, n: int) -> list[int]:
    if cfg.n1_values:
        vals = sorted({int(v) for v in cfg.n1_values if 1 <= int(v) <= n - 1})
        if not vals:
            raise ValueError(f"no n1 value in {cfg.n1_values} fits n={n}")
        return vals
    return ratio_grid(n, cfg.ratio_points)


def sweep_n1(cfg: ExperimentConfig) -> list[SweepResultRow]:
    cells = [("seq2seq", n, n1) for n in cfg.n_grid for n1 in n1_grid(cfg, n)]
    rows = run_cells(cfg, "sweep-n1", cells)
    return sorted(rows, key=lambda r: (r.n1, r.signal, r.n, r.kp))


def compare_ml(cfg: ExperimentConfig) -> list[SweepResultRow]:
    n = cfg.n
    cells = [("seq2seq", n, n1) for n1 in ratio_grid(n, cfg.ratio_points)] + [("ml", n, None)]
    rows = run_cells(cfg, "compare-ml", cells)
    return sorted(rows, key=lambda r: (r.signal, r.kp, r.arch == "ml", r.ln_r or 0.0))


# ---------------------------------------------------------------- trajectories

def model_label(model) -> str:
    if isinstance(model, nn.MlModel):
        return f"ml_n{model.n}"
    return f"seq2seq_n1_{model.n1}_n2_{model.n2}"


def trajectories(cfg: ExperimentConfig, models: list, out_dir) -> list[str]:
    """Per-signal CSVs: input window and truth for m + kp steps, predictions for the last kp."""
    kp = max(cfg.kp)
    series = eval_series(cfg)
    labels = [model_label(mdl) for mdl in models]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate model architectures: {labels}")
    paths = []
    for kind, s in series.items():
        rng = make_rng(cfg.seed, "trajectories", kind)
        starts = rng.integers(1, len(s.values) - cfg.m - kp + 2, size=cfg.windows)
        path = os.path.join(out_dir, f"trajectories_{kind}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window", "start", "step", "t", "truth"] + labels)
            for wi, p in enumerate(starts):
                i0 = int(p) - 1
                truth = s.values[i0:i0 + cfg.m + kp]
                inputs = truth[:cfg.m, None]
                preds = [nn.predict(mdl, inputs, kp)[:, 0] for mdl in models]
                for step in range(cfg.m + kp):
                    t = (i0 + step + 1) * s.config.dt
                    cells = [""] * len(models) if step < cfg.m else [repr(float(pr[step - cfg.m])) for pr in preds]
                    w.writerow([wi, int(p), step + 1, repr(float(t)), repr(float(truth[step]))] + cells)
        paths.append(path)
    return paths


# ---------------------------------------------------------------- consistency

def consistency_run(cfg: ExperimentConfig, model: nn.Seq2SeqModel, out_dir) -> dict:
    """Residual statistics before (and optionally after) decoder tuning."""
    if not isinstance(model, nn.Seq2SeqModel):
        raise ValueError("consistency analysis needs a seq2seq model")
    data = training_data(cfg)
    states = consistency.harvest_states(model.encoder, data, cfg.harvest_limit,
                                        make_rng(cfg.seed, "harvest"), extended=cfg.harvest_extended)
    series = eval_series(cfg)

    def ep_summary(mdl):
        return {f"{kind}_kp{kp}": rep.mean for (kind, kp), rep in evaluate_model(cfg, mdl, series).items()}

    before = consistency.consistency_stats(model, states)
    summary = {"before": before.summary(), "E_before": ep_summary(model)}
    before.to_files(os.path.join(out_dir, "consistency_before.csv"),
                    os.path.join(out_dir, "consistency_before.json"))
    if cfg.tune_steps > 0:
        tuned, hist = consistency.tune_decoder(model, states, cfg.tune_steps,
                                               consistency.TuneConfig(lr=cfg.tune_lr))
        after = consistency.consistency_stats(tuned, states)
        after.to_files(os.path.join(out_dir, "consistency_after.csv"),
                       os.path.join(out_dir, "consistency_after.json"))
        with open(os.path.join(out_dir, "tune_history.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "objective"])
            for i, v in enumerate(hist):
                w.writerow([i, repr(float(v))])
        nn.save_model(tuned, os.path.join(out_dir, "model_tuned.json"))
        summary.update(after=after.summary(), E_after=ep_summary(tuned),
                       objective_non_increasing=bool(np.all(np.diff(hist) <= 0)))
    with open(os.path.join(out_dir, "consistency_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


# ---------------------------------------------------------------- plots

def plot_rows(rows: list[SweepResultRow], x: str, path) -> None:
    """Line chart of mean E against ``x`` per (signal, n, kp); best effort."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not available, skipping %s", path)
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = {}
    for r in rows:
        if getattr(r, x) is None:
            continue
        groups.setdefault((r.signal, r.n, r.kp), []).append((getattr(r, x), r.mean_E))
    for (kind, n, kp), pts in sorted(groups.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "--" if kp != min(g[2] for g in groups) else "-",
                marker="o", label=f"{kind} n={n} kp={kp}")
    for r in rows:
        if r.arch == "ml":
            ax.axhline(r.mean_E, color="k", lw=0.8, ls="-" if r.kp == min(q.kp for q in rows) else "--")
    ax.set_xlabel(x)
    ax.set_ylabel("E")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def save_config(cfg: ExperimentConfig, out_dir) -> None:
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
