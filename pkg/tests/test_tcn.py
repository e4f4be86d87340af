import numpy as np
import pytest
from helpers import analytic_gradient, numeric_gradient, random_case, relative_error

from volcast.errors import NumericalError
from volcast.marketdata import WindowedDataset, generate_synthetic_panel, windowize
from volcast.tcn import (AdadeltaState, ConvLayer, TcnModel, TrainConfig, adadelta_step, causal_conv1d,
                         mse_loss_seq, mse_loss_seq_grad, predict_next, train)

# hand-iterated update rule (rho = 0.95, eps = 1e-6), evaluated with mpmath at 50 digits
ADADELTA_FIRST = -0.004472091234310839
ADADELTA_SECOND = -0.002886712856603746
ADADELTA_AFTER_TWO = -0.007358804090914584


def _layer(w, b=0.0, d=1, act="linear"):
    w = np.asarray(w, dtype=float).reshape(1, 1, -1)
    return ConvLayer(w, np.array([b], dtype=float), d, act)


def _linear_model(n_layers=1, k=1, input_length=8, weight=1.0):
    layers = [ConvLayer(np.full((1, 1, k), weight), np.zeros(1), 1, "linear") for _ in range(n_layers)]
    return TcnModel(layers, input_length)


# --- causal convolution --------------------------------------------------------

def test_conv_identity_kernel():
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    np.testing.assert_array_equal(causal_conv1d(x, _layer([0.0, 1.0])), x)


def test_conv_dilated_lag_tap():
    x = np.array([[1.0, 2.0, 3.0, 4.0, 5.0]])
    np.testing.assert_array_equal(causal_conv1d(x, _layer([1.0, 0.0], d=2)), [[0, 0, 1, 2, 3]])


def test_conv_relu_and_bias():
    x = np.array([[-1.0, 2.0]])
    np.testing.assert_array_equal(causal_conv1d(x, _layer([1.0], b=0.5, act="relu")), [[0.0, 2.5]])


def test_conv_preserves_length_and_errors():
    rng = np.random.default_rng(0)
    layer = ConvLayer(rng.normal(size=(3, 2, 2)), np.zeros(3), 4, "relu")
    assert causal_conv1d(rng.normal(size=(2, 10)), layer).shape == (3, 10)
    with pytest.raises(ValueError):
        causal_conv1d(rng.normal(size=(1, 10)), layer)
    with pytest.raises(ValueError):
        causal_conv1d(np.zeros((2, 0)), layer)


def test_conv_rejects_bad_layers():
    with pytest.raises(ValueError):
        ConvLayer(np.zeros((1, 1, 2)), np.zeros(1), 0)
    with pytest.raises(ValueError):
        ConvLayer(np.zeros((1, 1, 2)), np.zeros(1), 1, "tanh")


# --- architecture -----------------------------------------------------------------

def test_standard_architecture():
    m = TcnModel.standard(seed=0)
    assert m.n_params == 713
    assert m.receptive_field == 64
    assert [l.dilation for l in m.layers] == [1, 2, 4, 8, 16, 32, 1]
    assert [l.activation for l in m.layers] == ["relu"] * 6 + ["linear"]
    assert m.layers[-1].kernel == 1 and m.layers[-1].out_channels == 1
    assert all(np.all(l.biases == 0) for l in m.layers)


def test_glorot_bounds():
    m = TcnModel.standard(seed=1)
    first = m.layers[1].weights
    assert np.abs(first).max() <= np.sqrt(6.0 / (8 * 2 + 8 * 2))
    assert np.abs(m.layers[-1].weights).max() <= np.sqrt(6.0 / 9)


def test_output_shape_follows_input():
    m = TcnModel.standard(seed=0)
    out, _ = m.forward(np.zeros(64))
    assert out.shape == (64,)
    out, _ = m.forward(np.zeros((3, 64)))
    assert out.shape == (3, 64)
    with pytest.raises(ValueError):
        m.forward(np.zeros(63))


def test_influence_is_causal_and_bounded():
    m = TcnModel.standard(seed=5)
    x = np.random.default_rng(5).normal(size=64)
    base, _ = m.forward(x)
    for s in range(64):
        xp = x.copy()
        xp[s] += 1.0
        out, _ = m.forward(xp)
        changed = out != base
        assert not changed[:s].any()
        assert not changed[s + 64:].any()


def test_first_input_reaches_last_output():
    m = TcnModel.standard(seed=2)
    m.set_flat(np.abs(m.get_flat()) + 0.01)
    x = np.ones(64)
    base, _ = m.forward(x)
    x[0] += 1.0
    out, _ = m.forward(x)
    assert out[63] != base[63]


def test_zero_weights_give_bias_output():
    m = TcnModel.standard(seed=0)
    flat = np.zeros(m.n_params)
    flat[-1] = 0.25
    m.set_flat(flat)
    out, _ = m.forward(np.random.default_rng(0).normal(size=64))
    np.testing.assert_array_equal(out, np.full(64, 0.25))


# --- losses and gradients ---------------------------------------------------------------

def test_mse_loss_examples():
    assert mse_loss_seq([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse_loss_seq([0.0, 0.0], [1.0, 3.0]) == 5.0
    np.testing.assert_array_equal(mse_loss_seq_grad([0.0, 0.0], [1.0, 3.0]), [-1.0, -3.0])
    with pytest.raises(ValueError):
        mse_loss_seq([1.0], [1.0, 2.0])


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    model, x, target = random_case(seed)
    a = analytic_gradient(model, x, target)
    n, _ = numeric_gradient(model, x, target)
    assert relative_error(a, n).max() < 1e-5


def test_batched_gradient_is_sum_of_single():
    model, x, target = random_case(3)
    x2 = np.random.default_rng(9).normal(size=64)
    out, tape = model.forward(np.stack([x, x2]))
    g = np.random.default_rng(10).normal(size=out.shape)
    total = model.backward(tape, g)
    parts = []
    for row, grow in zip((x, x2), g):
        _, t1 = model.forward(row)
        parts.append(model.backward(t1, grow))
    np.testing.assert_allclose(total, parts[0] + parts[1], rtol=1e-12, atol=1e-14)


def test_zero_loss_gradient_gives_zero_parameter_gradient():
    model, x, _ = random_case(0)
    _, tape = model.forward(x)
    np.testing.assert_array_equal(model.backward(tape, np.zeros(64)), 0.0)


def test_single_linear_layer_closed_form():
    model = _linear_model(input_length=16, weight=0.3)
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=16), rng.normal(size=16)
    out, tape = model.forward(x)
    err = out - y
    grad = model.backward(tape, err / err.size)
    assert grad[0] == pytest.approx(np.mean(x * err), rel=1e-13)
    assert grad[1] == pytest.approx(np.mean(err), rel=1e-13)


def test_stale_and_foreign_tapes_rejected():
    model, x, _ = random_case(1)
    _, tape = model.forward(x)
    model.set_flat(model.get_flat())
    with pytest.raises(ValueError, match="stale"):
        model.backward(tape, np.zeros(64))
    other = model.copy()
    _, tape = model.forward(x)
    with pytest.raises(ValueError):
        other.backward(tape, np.zeros(64))
    with pytest.raises(ValueError):
        model.backward(tape, np.zeros(63))


# --- optimizer ------------------------------------------------------------------

def test_adadelta_first_step():
    new, state = adadelta_step(np.zeros(1), np.ones(1), AdadeltaState.zeros_like(np.zeros(1)))
    assert new[0] == pytest.approx(ADADELTA_FIRST, abs=1e-15)
    assert state.sq_grad[0] == pytest.approx(0.05)


def test_adadelta_two_steps_manual_iteration():
    x, state = np.zeros(1), AdadeltaState.zeros_like(np.zeros(1))
    x1, state = adadelta_step(x, np.array([1.0]), state)
    x2, state = adadelta_step(x1, np.array([0.5]), state)
    assert x2[0] - x1[0] == pytest.approx(ADADELTA_SECOND, abs=1e-12)
    assert x2[0] == pytest.approx(ADADELTA_AFTER_TWO, abs=1e-12)
    assert state.steps == 2


def test_adadelta_zero_gradient():
    p = np.array([1.0, -2.0])
    state = AdadeltaState(sq_grad=np.array([0.4, 0.2]), sq_update=np.array([0.1, 0.3]))
    new, state = adadelta_step(p, np.zeros(2), state)
    np.testing.assert_array_equal(new, p)
    np.testing.assert_allclose(state.sq_grad, [0.38, 0.19])
    np.testing.assert_allclose(state.sq_update, [0.095, 0.285])


def test_adadelta_skips_non_finite(caplog):
    state = AdadeltaState.zeros_like(np.zeros(2))
    new, state = adadelta_step(np.ones(2), np.array([1.0, np.nan]), state)
    np.testing.assert_array_equal(new, [1.0, 1.0])
    assert state.skipped == 1 and state.steps == 0
    assert "non-finite" in caplog.text


def test_adadelta_shape_mismatch():
    with pytest.raises(ValueError):
        adadelta_step(np.zeros(2), np.zeros(3), AdadeltaState.zeros_like(np.zeros(2)))


# --- training ----------------------------------------------------------------------

def _ar_dataset(n_days=400, seed=0):
    (s,) = generate_synthetic_panel(1, n_days, seed=seed)
    sl = windowize(s.values, 64, s.dates)
    return WindowedDataset.from_slices(sl.values, ["SYN000"] * len(sl), sl.end_dates)


def test_train_reaches_zero_function():
    ds = WindowedDataset.from_slices(np.full((1, 65), 0.2), ["X"], [np.datetime64("2020-01-01")],
                                     mean=0.2, std=1.0)
    res = train(TcnModel.standard(seed=0), ds, TrainConfig(epochs=300, seed=0))
    assert res.loss_history.shape == (300,)
    assert res.loss_history[-1] < 1e-6


def test_train_is_deterministic_and_leaves_input_model():
    ds = _ar_dataset()
    model = TcnModel.standard(seed=1)
    before = model.get_flat()
    cfg = TrainConfig(epochs=3, seed=7)
    a, b = train(model, ds, cfg), train(model, ds, cfg)
    assert a.loss_history.tobytes() == b.loss_history.tobytes()
    assert a.model.get_flat().tobytes() == b.model.get_flat().tobytes()
    np.testing.assert_array_equal(model.get_flat(), before)
    assert a.state.steps == 3 * int(np.ceil(len(ds) / 32))


def test_train_beats_naive_persistence():
    ds = _ar_dataset(n_days=500, seed=3)
    naive = mse_loss_seq(ds.inputs, ds.targets)
    res = train(TcnModel.standard(seed=0), ds, TrainConfig(epochs=40, seed=0))
    assert res.loss_history[-1] < naive


def test_train_last_target_mode():
    ds = _ar_dataset()
    res = train(TcnModel.standard(seed=0), ds, TrainConfig(epochs=5, seed=0, target="last"))
    assert res.loss_history[-1] < res.loss_history[0]


def test_train_rejects_empty_and_bad_config():
    ds = _ar_dataset()
    empty = WindowedDataset.from_slices(np.zeros((0, 65)), [], [], mean=0.0, std=1.0)
    with pytest.raises(ValueError):
        train(TcnModel.standard(seed=0), empty, TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        TrainConfig(target="middle")
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    assert len(ds) > 0


def test_train_aborts_on_non_finite_loss():
    ds = _ar_dataset()
    model = TcnModel.standard(seed=0)
    model.set_flat(np.full(model.n_params, 1e200))
    with pytest.raises(NumericalError, match="epoch 1, batch 1"):
        train(model, ds, TrainConfig(epochs=1))


def test_loss_history_file(tmp_path):
    res = train(TcnModel.standard(seed=0), _ar_dataset(), TrainConfig(epochs=2))
    res.write_loss_history(tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_loss" and len(lines) == 3
    assert float(lines[2].split(",")[1]) == res.loss_history[1]


# --- prediction and persistence ---------------------------------------------------

def test_predict_next_zero_model_returns_mean():
    m = TcnModel.standard(seed=0)
    m.set_flat(np.zeros(m.n_params))
    assert predict_next(m, np.random.default_rng(0).uniform(size=64), 0.3, 0.1) == pytest.approx(0.3)


def test_predict_next_identity_returns_last_value():
    m = _linear_model(input_length=64)
    window = np.random.default_rng(1).uniform(0.1, 0.5, 64)
    assert predict_next(m, window, 0.25, 0.07) == pytest.approx(window[-1], rel=1e-14)


def test_predict_next_compositional_recompute():
    m = TcnModel.standard(seed=8)
    window = np.random.default_rng(8).uniform(0.1, 0.5, 64)
    mean, std = 0.3, 0.08
    out, _ = m.forward((window - mean) / std)
    assert predict_next(m, window, mean, std) == out[63] * std + mean


def test_predict_next_errors():
    m = TcnModel.standard(seed=0)
    with pytest.raises(ValueError):
        predict_next(m, np.zeros(63), 0.0, 1.0)
    with pytest.raises(ValueError):
        predict_next(m, np.zeros(64), 0.0, 0.0)


def test_weight_file_round_trip(tmp_path):
    m = TcnModel.standard(seed=12)
    path = tmp_path / "w.tcn"
    m.save(path)
    back = TcnModel.load(path)
    assert back.get_flat().tobytes() == m.get_flat().tobytes()
    assert back.describe() == m.describe()
    x = np.random.default_rng(0).normal(size=64)
    assert back.forward(x)[0].tobytes() == m.forward(x)[0].tobytes()


def test_weight_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tcn"
    path.write_bytes(b"not a weight file")
    with pytest.raises(ValueError):
        TcnModel.load(path)
    m = TcnModel.standard(seed=0)
    m.save(path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="payload"):
        TcnModel.load(path)
