import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s2sml import nn
from s2sml.linalg import ShapeError, make_rng

TANH_HALF = 0.46211715726000974
ENC_S2 = 0.7452197423298184      # tanh(0.5 + tanh(0.5))
ML_X3 = 0.7278944044432927       # tanh(2 tanh(0.5))
TRAD_X1 = 0.6322884553180191     # tanh(ENC_S2)
TRAD_X2 = 0.8803920651654226     # tanh(ENC_S2 + TRAD_X1)


def scalar_cell(w_in=1.0, w_rec=1.0, b=0.0):
    return nn.RnnCellParams(np.array([[w_in]]), np.array([[w_rec]]), np.array([b]))


def scalar_predictor(w=1.0, b=0.0):
    return nn.PredictorParams(np.array([[w]]), np.array([b]))


def scalar_seq2seq():
    return nn.Seq2SeqModel(scalar_cell(), scalar_cell(), scalar_predictor(), m=2, k=2)


def zero_seq2seq(d=1, n1=3, n2=2, bias=0.7, k=3):
    return nn.Seq2SeqModel(nn.zero_cell(n1, d), nn.zero_cell(n2, n1), nn.zero_predictor(d, n2, [bias] * d), 4, k)


def random_s2s(seed, d=1, n1=3, n2=2, m=5, k=3, scale=1.0):
    mdl = nn.init_seq2seq(d, n1, n2, m, k, make_rng(seed))
    return nn.with_params(mdl, {key: v * scale for key, v in nn.params(mdl).items()})


def test_cell_step_examples():
    zero = nn.zero_cell(3, 2)
    assert np.array_equal(nn.cell_step(zero, np.array([1.0, -2]), np.array([0.3, 0.1, 0.5])), np.zeros(3))
    assert nn.cell_step(scalar_cell(), np.array([1.0]), np.array([-1.0]))[0] == 0.0
    got = nn.cell_step(scalar_cell(w_rec=0.0), np.array([0.5]), np.array([0.0]))[0]
    assert got == pytest.approx(TANH_HALF, abs=1e-15)


def test_cell_step_dimension_mismatch():
    with pytest.raises(ShapeError):
        nn.cell_step(nn.zero_cell(3, 2), np.zeros(3), np.zeros(3))


def test_encode_examples():
    xs = np.array([[0.5], [0.5]])
    states = nn.encode(scalar_cell(), xs)
    assert states[:, 0] == pytest.approx([TANH_HALF, ENC_S2], abs=1e-14)
    assert np.array_equal(nn.encode(nn.zero_cell(4, 1), xs), np.zeros((2, 4)))
    cell = nn.init_cell(3, 2, make_rng(0))
    x1 = np.array([[0.2, -0.4]])
    assert np.array_equal(nn.encode(cell, x1)[-1], nn.cell_step(cell, x1[0], np.zeros(3)))
    with pytest.raises(ValueError):
        nn.encode(cell, np.zeros((0, 2)))


def test_decode_examples():
    mdl = zero_seq2seq()
    assert np.array_equal(nn.decode_traditional(mdl, np.ones(3) * 0.3, 5), np.zeros((5, 2)))
    mdl = random_s2s(1)
    ctx = np.array([0.1, -0.5, 0.3])
    assert np.array_equal(nn.decode_traditional(mdl, ctx, 1)[0], nn.cell_step(mdl.decoder, ctx, np.zeros(2)))
    assert np.array_equal(nn.decode_traditional(mdl, ctx, 40)[:10], nn.decode_traditional(mdl, ctx, 10))


def test_predictor_examples():
    p = nn.zero_predictor(2, 3, [0.5, -1.0])
    assert np.array_equal(nn.predictor_apply(p, np.array([0.1, 0.2, 0.3])), [0.5, -1.0])
    assert nn.predictor_apply(scalar_predictor(), np.array([0.3]))[0] == 0.3
    p = nn.PredictorParams(np.array([[2.0, 0.0]]), np.array([1.0]))
    assert nn.predictor_apply(p, np.array([0.5, 0.9]))[0] == 2.0
    with pytest.raises(ShapeError):
        nn.predictor_apply(p, np.zeros(3))


def test_predict_traditional_examples():
    xs = np.array([[0.2], [-0.1], [0.4], [0.0]])
    assert np.array_equal(nn.predict_traditional(zero_seq2seq(), xs, 3), np.full((3, 1), 0.7))

    mdl = random_s2s(2)
    s_m = nn.encode(mdl.encoder, xs)[-1]
    expect = np.stack([nn.predictor_apply(mdl.predictor, sig) for sig in nn.decode_traditional(mdl, s_m, 3)])
    assert np.array_equal(nn.predict_traditional(mdl, xs, 3), expect)

    got = nn.predict_traditional(scalar_seq2seq(), np.array([[0.5], [0.5]]), 2)[:, 0]
    assert got == pytest.approx([TRAD_X1, TRAD_X2], abs=1e-14)


def test_predict_traditional_only_uses_given_inputs():
    mdl = random_s2s(3)
    rng = make_rng(9)
    long = rng.standard_normal((9, 1))
    a = nn.predict_traditional(mdl, long[:5], 3)
    long2 = long.copy()
    long2[5:] = 42.0
    assert np.array_equal(a, nn.predict_traditional(mdl, long2[:5], 3))


def test_rounds_examples():
    mdl = random_s2s(4)
    xs = make_rng(5).standard_normal((5, 1))
    assert np.array_equal(nn.predict_traditional_rounds(mdl, xs, 3, 1), nn.predict_traditional(mdl, xs, 3))
    assert np.array_equal(nn.predict_traditional_rounds(zero_seq2seq(), xs, 3, 4), np.full((12, 1), 0.7))

    s = nn.Seq2SeqModel(scalar_cell(0.8, 0.3, 0.1), scalar_cell(0.5, -0.4, 0.0), scalar_predictor(1.3, 0.05), 2, 1)
    xs = np.array([[0.5], [0.2]])
    two = nn.predict_traditional_rounds(s, xs, 1, 2)
    first = nn.predict_traditional(s, xs, 1)
    second = nn.predict_traditional(s, np.concatenate([xs, first]), 1)
    assert two[0] == first[0] and two[1] == second[0]


def test_rounds_match_full_reencoding():
    mdl = random_s2s(6, d=2, n1=4, n2=3)
    xs = make_rng(1).standard_normal((5, 2))
    got = nn.predict_traditional_rounds(mdl, xs, 3, 3)
    seq, expect = xs, []
    for _ in range(3):
        pr = nn.predict_traditional(mdl, seq, 3)
        expect.append(pr)
        seq = np.concatenate([seq, pr])
    assert np.array_equal(got, np.concatenate(expect))


def test_ew_single_step_rounds():
    mdl = random_s2s(7)
    xs = make_rng(2).standard_normal((5, 1))
    rounds = nn.ew_single_step_rounds(mdl, xs, 3, 3)
    assert rounds.shape == (3, 3, 1)
    assert np.array_equal(rounds[0], nn.predict_traditional(mdl, xs, 3))
    zero = np.zeros(mdl.n2)
    s_m = nn.encode(mdl.encoder, xs)[-1]
    f2 = lambda a, b: nn.cell_step(mdl.decoder, a, b)
    P = lambda s: nn.predictor_apply(mdl.predictor, s)
    assert np.array_equal(rounds[0, 1], P(f2(s_m, f2(s_m, zero))))
    s_next = nn.cell_step(mdl.encoder, P(f2(s_m, zero)), s_m)
    assert np.array_equal(rounds[1, 0], P(f2(s_next, zero)))


def test_ml_rollout_examples():
    zero = nn.MlModel(nn.zero_cell(4, 1), nn.zero_predictor(1, 4, [-0.25]), 3, 5)
    assert np.array_equal(nn.ml_rollout(zero, np.ones((3, 1)), 6), np.full((6, 1), -0.25))

    s = nn.MlModel(scalar_cell(), scalar_predictor(), 1, 2)
    got = nn.ml_rollout(s, np.array([[0.5]]), 2)[:, 0]
    assert got == pytest.approx([TANH_HALF, ML_X3], abs=1e-14)

    mdl = nn.init_ml(2, 5, 4, 10, make_rng(3))
    xs = make_rng(4).standard_normal((4, 2))
    assert np.array_equal(nn.ml_rollout(mdl, xs, 40)[:10], nn.ml_rollout(mdl, xs, 10))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.integers(1, 5), st.integers(1, 5))
def test_states_bounded_and_batch_consistent(seed, d, n1, n2):
    rng = make_rng(seed)
    mdl = nn.init_seq2seq(d, n1, n2, 4, 3, rng)
    xs = rng.standard_normal((6, 4, d))
    states = nn.encode(mdl.encoder, xs)
    assert np.all(np.abs(states) < 1)
    assert np.all(np.abs(nn.decode_traditional(mdl, states[:, -1], 3)) < 1)
    # saturated regime: float64 tanh may round to exactly +-1 but never beyond
    big = nn.with_params(mdl, {key: 50 * v for key, v in nn.params(mdl).items()})
    assert np.all(np.abs(nn.encode(big.encoder, 10 * xs)) <= 1)
    batch = nn.predict_traditional(mdl, xs, 3)
    single = np.stack([nn.predict_traditional(mdl, x, 3) for x in xs])
    assert np.allclose(batch, single, rtol=1e-12, atol=1e-12)


def test_model_shape_validation():
    with pytest.raises(ShapeError):
        nn.Seq2SeqModel(nn.zero_cell(3, 1), nn.zero_cell(2, 4), nn.zero_predictor(1, 2), 4, 3)
    with pytest.raises(ShapeError):
        nn.MlModel(nn.zero_cell(3, 1), nn.zero_predictor(1, 2), 4, 3)
    with pytest.raises(ShapeError):
        nn.RnnCellParams(np.zeros((3, 1)), np.zeros((3, 2)), np.zeros(3))


def test_json_round_trip_bit_exact(tmp_path):
    for mdl in (random_s2s(11, d=2, n1=4, n2=3), nn.init_ml(1, 6, 70, 10, make_rng(12))):
        path = tmp_path / f"{mdl.arch}.json"
        nn.save_model(mdl, path)
        back = nn.load_model(path)
        assert type(back) is type(mdl) and back.dims() == mdl.dims()
        for key, v in nn.params(mdl).items():
            assert np.array_equal(nn.params(back)[key], v)
        doc = json.loads(path.read_text())
        assert doc["format_version"] == 1 and doc["arch"] == mdl.arch


def test_model_dims():
    mdl = random_s2s(0, d=1, n1=40, n2=10, m=70, k=10)
    assert mdl.dims() == {"d": 1, "n1": 40, "n2": 10, "m": 70, "k": 10}
    assert mdl.ratio == 4
