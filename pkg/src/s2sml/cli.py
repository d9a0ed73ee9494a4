"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 runtime error (I/O, shapes),
3 failed gradient check.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import experiments as ex
from . import nn
from .config import resolve
from .linalg import ShapeError, make_rng
from .train import grad_check

log = logging.getLogger("s2sml")

EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 1, 2, 3
GRAD_TOL = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    scale = common.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", dest="scale", action="store_const", const="desk")
    scale.add_argument("--paper-scale", dest="scale", action="store_const", const="paper")
    common.add_argument("--arch", choices=["seq2seq", "ml"])
    common.add_argument("--signal", choices=["sine", "trapezoid", "both"])
    common.add_argument("--n", type=int, help="total neuron count")
    common.add_argument("--n-grid", type=_int_list, help="comma-separated totals for sweeps")
    common.add_argument("--n1", type=int, help="encoder size (seq2seq)")
    common.add_argument("--n1-values", type=_int_list, help="comma-separated n1 grid for sweep-n1")
    common.add_argument("--m", type=int)
    common.add_argument("--k", type=int)
    common.add_argument("--kp", type=_int_list, help="comma-separated prediction lengths")
    common.add_argument("--trials", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--noise", type=float)
    common.add_argument("--per-kind", type=int, help="training windows per signal kind")
    common.add_argument("--data", help="dataset JSON-lines file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="s2sml", description="Seq2seq vs memoryless recurrent forecasting experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen-data", parents=[common], help="write series CSVs and the training dataset")
    sub.add_parser("train", parents=[common], help="train one model")
    sub.add_parser("sweep-ratio", parents=[common], help="error against ln(n1/n2)")
    sub.add_parser("sweep-n1", parents=[common], help="error against n1")
    sub.add_parser("compare-ml", parents=[common], help="traditional over the ratio grid vs memoryless")
    tr = sub.add_parser("trajectories", parents=[common], help="export predicted continuations")
    tr.add_argument("--model", action="append", required=True, help="model JSON (repeatable)")
    tr.add_argument("--windows", type=int)
    co = sub.add_parser("consistency", parents=[common], help="decoder consistency residuals")
    co.add_argument("--model", required=True)
    co.add_argument("--limit", dest="harvest_limit", type=int)
    co.add_argument("--extended", dest="harvest_extended", action="store_const", const=True)
    co.add_argument("--tune-steps", type=int)
    co.add_argument("--tune-lr", type=float)
    gc = sub.add_parser("grad-check", parents=[common], help="analytic vs finite-difference gradients")
    gc.add_argument("--count", type=int, default=20, help="random tiny models per architecture")
    gc.add_argument("--model", help="check this model instead of random tiny ones")
    return p


CONFIG_KEYS = ("seed", "out", "scale", "arch", "signal", "n", "n_grid", "n1", "n1_values", "m", "k", "kp",
               "trials", "epochs", "batch_size", "lr", "noise", "per_kind", "data", "windows",
               "harvest_limit", "harvest_extended", "tune_steps", "tune_lr")


def make_config(args):
    overrides = {key: getattr(args, key, None) for key in CONFIG_KEYS}
    try:
        return resolve(config_path=args.config, overrides=overrides)
    except (ValueError, TypeError, OSError) as e:
        raise UsageError(str(e)) from e


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        os.makedirs(cfg.out, exist_ok=True)
        ex.save_config(cfg, cfg.out)
        return COMMANDS[args.command](cfg, args)
    except UsageError as e:
        print(f"s2sml: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ShapeError, ValueError, KeyError) as e:
        print(f"s2sml: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def cmd_gen_data(cfg, args) -> int:
    data, series = ex.build_training_data(cfg)
    from .signals import save_series_csv
    for kind, s in series.items():
        save_series_csv(s, os.path.join(cfg.out, f"series_{kind}.csv"))
    path = os.path.join(cfg.out, "dataset.jsonl")
    data.to_jsonl(path)
    print(f"wrote {len(data)} samples to {path}")
    return 0


def _data_path(cfg):
    return cfg.data or os.path.join(cfg.out, "dataset.jsonl")


def cmd_train(cfg, args) -> int:
    path = _data_path(cfg)
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset {path} not found; run gen-data first or pass --data")
    cfg.data = path
    data = ex.training_data(cfg)
    if cfg.arch == "ml":
        model, hist, _ = ex.train_cell(cfg, data, "ml", cfg.n)
        name = f"model_ml_n{cfg.n}"
    else:
        n1 = cfg.n1 if cfg.n1 is not None else cfg.n // 2
        if not 1 <= n1 < cfg.n:
            raise UsageError(f"need 1 <= n1 < n, got n1={n1}, n={cfg.n}")
        model, hist, _ = ex.train_cell(cfg, data, "seq2seq", cfg.n, n1)
        name = f"model_seq2seq_n1_{n1}_n2_{cfg.n - n1}"
    nn.save_model(model, os.path.join(cfg.out, name + ".json"))
    hist.to_csv(os.path.join(cfg.out, name + "_history.csv"))
    extra = f" r={model.ratio:g}" if isinstance(model, nn.Seq2SeqModel) else ""
    print(f"{name}: final train loss {hist.train_loss[-1]:.6g} val loss {hist.val_loss[-1]:.6g}{extra}")
    return 0


def _sweep(cfg, rows, name, x):
    path = os.path.join(cfg.out, name + ".csv")
    ex.write_rows(rows, path)
    ex.plot_rows(rows, x, os.path.join(cfg.out, name + ".svg"))
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_sweep_ratio(cfg, args) -> int:
    return _sweep(cfg, ex.sweep_ratio(cfg), "sweep_ratio", "ln_r")


def cmd_sweep_n1(cfg, args) -> int:
    return _sweep(cfg, ex.sweep_n1(cfg), "sweep_n1", "n1")


def cmd_compare_ml(cfg, args) -> int:
    return _sweep(cfg, ex.compare_ml(cfg), "compare_ml", "ln_r")


def cmd_trajectories(cfg, args) -> int:
    models = [nn.load_model(p) for p in args.model]
    for p in ex.trajectories(cfg, models, cfg.out):
        print(f"wrote {p}")
    return 0


def cmd_consistency(cfg, args) -> int:
    summary = ex.consistency_run(cfg, nn.load_model(args.model), cfg.out)
    b = summary["before"]
    print(f"residual over {b['count']} states: mean {b['mean']:.6g} median {b['median']:.6g}")
    if "after" in summary:
        a = summary["after"]
        print(f"after tuning: mean {a['mean']:.6g} median {a['median']:.6g}")
    return 0


def cmd_grad_check(cfg, args) -> int:
    if args.model:
        model = nn.load_model(args.model)
        rng = make_rng(cfg.seed, "grad-check")
        worst = {model.arch: grad_check(model, rng.standard_normal((model.m, model.d)),
                                        rng.standard_normal((model.k, model.d)))}
    else:
        worst = random_grad_check(cfg.seed, args.count)
    ok = True
    for arch, err in worst.items():
        status = "PASS" if err < GRAD_TOL else "FAIL"
        ok &= err < GRAD_TOL
        print(f"{status} {arch}: max relative discrepancy {err:.3e} (tolerance {GRAD_TOL:g})")
    return 0 if ok else EXIT_CHECK


def random_grad_check(seed: int, count: int, m: int = 4, k: int = 3) -> dict:
    """Worst discrepancy over ``count`` random tiny models of each architecture (dims <= 5)."""
    worst = {"seq2seq": 0.0, "ml": 0.0}
    for i in range(count):
        rng = make_rng(seed, "grad-check", i)
        d, n1, n2, n = (int(v) for v in rng.integers(1, 6, size=4))
        xs, ys = rng.standard_normal((m, d)), rng.standard_normal((k, d))
        s2 = nn.init_seq2seq(d, n1, n2, m, k, rng)
        ml = nn.init_ml(d, n, m, k, rng)
        worst["seq2seq"] = max(worst["seq2seq"], grad_check(s2, xs, ys))
        worst["ml"] = max(worst["ml"], grad_check(ml, xs, ys))
    return worst


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sweep-ratio": cmd_sweep_ratio,
    "sweep-n1": cmd_sweep_n1,
    "compare-ml": cmd_compare_ml,
    "trajectories": cmd_trajectories,
    "consistency": cmd_consistency,
    "grad-check": cmd_grad_check,
}


if __name__ == "__main__":
    sys.exit(main())
