"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

Run alone with ``pytest tests/test_acceptance.py -v`` (a few minutes) or
``python tests/test_acceptance.py``.
"""
import filecmp
import functools
import json
import os

import numpy as np
import pytest

from s2sml import consistency, nn
from s2sml import experiments as ex
from s2sml.cli import main, random_grad_check
from s2sml.config import ratio_grid, resolve
from s2sml.evaluate import engine, ep_error, eval_Ep
from s2sml.linalg import make_rng
from s2sml.signals import SignalConfig, generate
from s2sml.train import loss_mse

GRAD_COUNT, GRAD_EPS, GRAD_TOL = 20, 1e-5, 1e-4
METRIC_SAMPLES, METRIC_RTOL = 100, 1e-12
EP_EXAMPLE, EP_EXAMPLE_TOL = 3.5355339059, 1e-9
IDENTITY_SETTINGS, IDENTITY_RTOL = 50, 1e-12
PREFIX_MODELS = 100
LEARN_SAMPLES, LEARN_EPOCHS, LEARN_N, LEARN_TOL = 800, 10, 50, 0.1
TREND_SEEDS, TREND_N, TREND_KP, SINE_SLACK = range(5), 50, 10, 1.05
CONS_SEEDS, CONS_STATES, CONS_RATIO, CONS_NEEDED = range(5), 500, 0.5, 4
CONS_N1, CONS_N2 = 40, 10
TUNE_STEPS, TUNE_LR, TUNE_REDUCTION = 200, 1e-4, 0.25

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def _report(num, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {num:2d} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return _report


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-300)))


def test_c01_gradient_correctness(report):
    worst = random_grad_check(0, GRAD_COUNT)
    ok = max(worst.values()) < GRAD_TOL
    assert report(1, ok, f"max relative FD discrepancy {worst} (eps={GRAD_EPS:g}, tol {GRAD_TOL:g})")


def test_c02_metric_oracle(report):
    s = generate(SignalConfig(n_points=5000), 1)
    mdl = nn.init_ml(1, 8, 70, 10, make_rng(2))
    rep = eval_Ep(engine(mdl), s, 70, 10, 1, METRIC_SAMPLES, make_rng(3))
    worst = 0.0
    for e, p in zip(rep.errors, rep.starts):
        x = s.values[p - 1:p + 69, None]
        y = s.values[p + 69:p + 79, None]
        worst = max(worst, rel(e, np.sqrt(loss_mse(nn.predict(mdl, x, 10), y))))
    example = ep_error([[3.0], [4.0]], [[0.0], [0.0]])
    ok = worst < METRIC_RTOL and abs(example - EP_EXAMPLE) < EP_EXAMPLE_TOL
    assert report(2, ok, f"p=1 vs sqrt(loss) worst rel {worst:.2e} (tol {METRIC_RTOL:g}); "
                         f"(3,4) example {example:.10f} (tol {EP_EXAMPLE_TOL:g})")


def test_c03_round_identities(report):
    worst = 0.0
    for i in range(IDENTITY_SETTINGS):
        rng = make_rng(i, "identity")
        d, n1, n2, k = (int(v) for v in rng.integers(1, 6, size=4))
        mdl = nn.init_seq2seq(d, n1, n2, 6, max(k, 2), rng)
        r = consistency.verify_round_identities(mdl, rng.standard_normal((6, d)))
        worst = max(worst, rel(r.x2_round1, r.x2_round1_nested), rel(r.x2_round2, r.x2_round2_nested))
    assert report(3, worst < IDENTITY_RTOL, f"worst rel error {worst:.2e} over {IDENTITY_SETTINGS} settings "
                                            f"(tol {IDENTITY_RTOL:g})")


def test_c04_rollout_prefix(report):
    bad = 0
    for i in range(PREFIX_MODELS):
        rng = make_rng(i, "prefix")
        d, n = int(rng.integers(1, 4)), int(rng.integers(1, 30))
        mdl = nn.init_ml(d, n, 8, 10, rng)
        xs = rng.standard_normal((8, d))
        bad += not np.array_equal(nn.ml_rollout(mdl, xs, 40)[:10], nn.ml_rollout(mdl, xs, 10))
    assert report(4, bad == 0, f"{bad}/{PREFIX_MODELS} models differ on the first 10 outputs (exact)")


def test_c05_desk_learning(report):
    cfg = resolve("desk", overrides=dict(signal="sine", noise=0.0, per_kind=LEARN_SAMPLES,
                                         epochs=LEARN_EPOCHS, kp=[10]))
    data = ex.training_data(cfg)
    mdl, _, _ = ex.train_cell(cfg, data, "ml", LEARN_N)
    # E_1 is the training error: mean over the training windows
    pred = nn.predict(mdl, data.inputs, cfg.k)
    e1 = float(np.mean([ep_error(p, t) for p, t in zip(pred, data.targets)]))
    held = eval_Ep(engine(mdl), ex.eval_series(cfg)["sine"], cfg.m, cfg.k, 1, cfg.trials,
                   make_rng(cfg.seed, "e1")).mean
    assert report(5, e1 < LEARN_TOL, f"ML n={LEARN_N} E_1 = {e1:.4f} over {len(data)} noiseless sine "
                                     f"training windows after {LEARN_EPOCHS} epochs (tol < {LEARN_TOL}); "
                                     f"fresh windows {held:.4f}")


@functools.cache
def trend_rows(seed):
    cfg = resolve("desk", overrides=dict(seed=seed, n=TREND_N, kp=[TREND_KP]))
    return ex.compare_ml(cfg)


def trend_medians(kind, n1):
    ml, trad = [], []
    for seed in TREND_SEEDS:
        for r in trend_rows(seed):
            if r.signal == kind and r.kp == TREND_KP:
                if r.arch == "ml":
                    ml.append(r.mean_E)
                elif r.n1 == n1:
                    trad.append(r.mean_E)
    return float(np.median(ml)), float(np.median(trad))


def test_c06_trend_trapezoid(report):
    n1 = ratio_grid(TREND_N, resolve("desk").ratio_points)[0]
    ml, trad = trend_medians("trapezoid", n1)
    assert report(6, ml < trad, f"trapezoid r={n1}/{TREND_N - n1}: median ML {ml:.4f} vs traditional {trad:.4f}")


def test_c07_trend_sine(report):
    n1 = ratio_grid(TREND_N, resolve("desk").ratio_points)[-1]
    ml, trad = trend_medians("sine", n1)
    ok = ml <= SINE_SLACK * trad
    assert report(7, ok, f"sine r={n1}/{TREND_N - n1}: median ML {ml:.4f} vs {SINE_SLACK}x traditional "
                         f"{SINE_SLACK * trad:.4f}")


@functools.cache
def consistency_case(seed):
    cfg = resolve("desk", overrides=dict(seed=seed))
    data = ex.training_data(cfg)
    mdl, _, _ = ex.train_cell(cfg, data, "seq2seq", CONS_N1 + CONS_N2, CONS_N1)
    states = consistency.harvest_states(mdl.encoder, data, CONS_STATES, make_rng(seed, "harvest"))
    return cfg, mdl, states


def test_c08_consistency_statistic(report):
    ratios = []
    for seed in CONS_SEEDS:
        _, mdl, states = consistency_case(seed)
        fresh = nn.init_cell(CONS_N2, CONS_N1, make_rng(seed, "reinit"))
        reinit = nn.Seq2SeqModel(mdl.encoder, fresh, mdl.predictor, mdl.m, mdl.k)
        trained = consistency.consistency_stats(mdl, states).median
        ratios.append(trained / consistency.consistency_stats(reinit, states).median)
    passed = sum(r < CONS_RATIO for r in ratios)
    ok = passed >= CONS_NEEDED
    assert report(8, ok, f"trained/re-initialized median residual ratios {np.round(ratios, 3).tolist()}; "
                         f"{passed}/{len(ratios)} below {CONS_RATIO} (need {CONS_NEEDED})")


def test_c09_decoder_tuning(report):
    cfg, mdl, states = consistency_case(0)
    before = consistency.consistency_stats(mdl, states)
    tuned, hist = consistency.tune_decoder(mdl, states, TUNE_STEPS, consistency.TuneConfig(lr=TUNE_LR))
    after = consistency.consistency_stats(tuned, states)
    monotone = bool(np.all(np.diff(hist) <= 0))
    cut = 1 - after.mean / before.mean
    series = ex.eval_series(cfg)
    ep = {name: {f"{k}_kp{kp}": round(r.mean, 4) for (k, kp), r in ex.evaluate_model(cfg, m, series).items()}
          for name, m in (("before", mdl), ("after", tuned))}
    ok = monotone and cut >= TUNE_REDUCTION
    assert report(9, ok, f"non-increasing={monotone}, mean residual {before.mean:.4f} -> {after.mean:.4f} "
                         f"({cut:.1%} cut, need >= {TUNE_REDUCTION:.0%}); E_p {ep}")


def run_all_commands(root, cfg_path):
    out = str(root)
    common = ["--config", str(cfg_path), "--out", out, "--seed", "7"]
    codes = [main(["gen-data", *common])]
    for extra in (["--arch", "ml"], ["--arch", "seq2seq", "--n1", "40"], ["--arch", "seq2seq", "--n1", "10"]):
        codes.append(main(["train", *common, *extra]))
    codes += [main([c, *common]) for c in ("sweep-ratio", "sweep-n1", "compare-ml")]
    models = [os.path.join(out, f) for f in ("model_ml_n50.json", "model_seq2seq_n1_40_n2_10.json",
                                             "model_seq2seq_n1_10_n2_40.json")]
    codes.append(main(["trajectories", *common, *sum([["--model", p] for p in models], [])]))
    codes.append(main(["consistency", *common, "--model", models[1], "--tune-steps", "20"]))
    codes.append(main(["grad-check", *common, "--count", "3"]))
    return codes


def test_c10_determinism(report, tmp_path):
    # desk preset with fewer samples/epochs/windows so every command runs twice in reasonable time
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"per_kind": 100, "epochs": 2, "trials": 30}))
    codes = [run_all_commands(tmp_path / run, cfg_path) for run in ("a", "b")]
    csvs = sorted(f for f in os.listdir(tmp_path / "a") if f.endswith(".csv"))
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", csvs, shallow=False)
    ok = all(c == 0 for c in codes[0] + codes[1]) and not mismatch and not errors and len(csvs) >= 10
    assert report(10, ok, f"{len(csvs)} CSV files compared, mismatched {mismatch + errors}, exit codes {codes[0]}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
