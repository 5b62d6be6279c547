import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mrpirnn.network import (
    NetworkConfig,
    augment_motion_noise,
    check_weights,
    forward_teacher,
    gru_current_step,
    gru_history_step,
    init_weights,
    make_windows,
    readout,
    rnn_step,
    rollout,
)

SMALL = NetworkConfig(hidden_size=3, history_steps=2)


def random_weights(config, seed, scale=0.8):
    rng = np.random.default_rng(seed)
    return {k: rng.uniform(-scale, scale, size=s) for k, s in config.shapes().items()}


def zero_weights(config):
    return {k: np.zeros(s) for k, s in config.shapes().items()}


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_gru(h_prev, x, q, w, hidden_bias=True):
    """Element-by-element GRU update written with Python floats only."""
    size = len(h_prev)

    def dot(mat, row, vec):
        return sum(mat[row][c] * vec[c] for c in range(len(vec)))

    def pre(gate, row):
        total = dot(w[f"{gate}_hidden"], row, h_prev) + dot(w[f"{gate}_input"], row, x)
        if q is not None:
            total += dot(w[f"{gate}_motion"], row, q)
        return total + w[f"{gate}_bias"][row]

    reset = [sig(pre("reset", k)) for k in range(size)]
    update = [sig(pre("update", k)) for k in range(size)]
    out = []
    for k in range(size):
        drive = reset[k] * dot(w["candidate_hidden"], k, h_prev) + dot(w["candidate_input"], k, x)
        drive += w["candidate_bias"][k]
        if q is not None:
            drive += dot(w["candidate_motion"], k, q)
        value = update[k] * h_prev[k] + (1 - update[k]) * math.tanh(drive)
        out.append(value + (w["state_bias"][k] if hidden_bias else 0.0))
    return out


def scalar_window(w, x_hist, q_hist, x_cur, size):
    h = [0.0] * size
    for x, q in zip(x_hist, q_hist):
        h = scalar_gru(h, list(x), list(q), w)
    h = scalar_gru(h, list(x_cur), None, w)
    return [sum(w["readout"][0][c] * h[c] for c in range(size)) + w["readout_bias"][0]]


def test_history_step_matches_scalar_oracle():
    w = random_weights(SMALL, 0)
    w_list = {k: v.tolist() for k, v in w.items()}
    h_prev, x, q = [0.3, -0.2, 0.5], [0.1, 0.7, 0.4], [0.9]
    got = gru_history_step(np.array([h_prev]), np.array([x]), np.array([q]), w)
    np.testing.assert_allclose(got[0], scalar_gru(h_prev, x, q, w_list), rtol=1e-14)


def test_current_step_matches_scalar_oracle():
    w = random_weights(SMALL, 1)
    w_list = {k: v.tolist() for k, v in w.items()}
    h_prev, x = [0.3, -0.2, 0.5], [0.1, 0.7, 0.4]
    got = gru_current_step(np.array([h_prev]), np.array([x]), w)
    np.testing.assert_allclose(got[0], scalar_gru(h_prev, x, None, w_list), rtol=1e-14)


def test_current_step_equals_history_step_without_motion_weights():
    w = random_weights(SMALL, 2)
    muted = {**w, **{k: np.zeros_like(v) for k, v in w.items() if k.endswith("_motion")}}
    h, x, q = np.full((1, 3), 0.2), np.full((1, 3), -0.4), np.full((1, 1), 1.7)
    np.testing.assert_array_equal(gru_current_step(h, x, w), gru_history_step(h, x, q, muted))


def test_zero_weights_halve_hidden_state():
    w = zero_weights(SMALL)
    h = np.array([[0.4, -1.0, 2.0]])
    x, q = np.ones((1, 3)), np.ones((1, 1))
    np.testing.assert_array_equal(gru_history_step(h, x, q, w), 0.5 * h)
    np.testing.assert_array_equal(gru_current_step(h, x, w), 0.5 * h)
    np.testing.assert_array_equal(gru_history_step(np.zeros((1, 3)), x, q, w), 0.0)


def test_readout_examples():
    w = {"readout": np.array([[2.0]]), "readout_bias": np.array([1.0])}
    assert readout(np.array([[0.5]]), w)[0, 0] == 2.0
    w = {"readout": np.zeros((1, 3)), "readout_bias": np.array([0.7])}
    assert readout(np.ones((1, 3)), w)[0, 0] == 0.7
    w = random_weights(SMALL, 3)
    w["readout_bias"] = np.zeros(1)
    h = np.array([[0.1, 0.2, -0.3]])
    np.testing.assert_allclose(readout(3.0 * h, w), 3.0 * readout(h, w), rtol=1e-14)


def test_forward_teacher_matches_composed_oracle():
    w = random_weights(SMALL, 4)
    w_list = {k: v.tolist() for k, v in w.items()}
    rng = np.random.default_rng(5)
    x_hist, q_hist, x_cur = rng.normal(size=(2, 3)), rng.normal(size=(2, 1)), rng.normal(size=3)
    got = forward_teacher(w, x_hist[None], q_hist[None], x_cur[None], SMALL)
    np.testing.assert_allclose(got[0], scalar_window(w_list, x_hist, q_hist, x_cur, 3), rtol=1e-13)


def test_zero_network_outputs_readout_bias():
    w = zero_weights(SMALL)
    w["readout_bias"] = np.array([-0.25])
    rng = np.random.default_rng(6)
    out = forward_teacher(w, rng.normal(size=(4, 2, 3)), rng.normal(size=(4, 2, 1)), rng.normal(size=(4, 3)), SMALL)
    np.testing.assert_array_equal(out, -0.25)


def test_no_history_window():
    config = NetworkConfig(hidden_size=3, history_steps=0)
    w = random_weights(config, 7)
    x = np.array([[0.2, 0.1, -0.3]])
    expected = readout(gru_current_step(np.zeros((1, 3)), x, w), w)
    np.testing.assert_array_equal(forward_teacher(w, np.zeros((1, 0, 3)), np.zeros((1, 0, 1)), x, config), expected)


def test_forward_teacher_is_deterministic():
    w = random_weights(SMALL, 8)
    args = (np.ones((2, 2, 3)), np.ones((2, 2, 1)), np.ones((2, 3)))
    np.testing.assert_array_equal(forward_teacher(w, *args, SMALL), forward_teacher(w, *args, SMALL))


def test_window_shape_error():
    with pytest.raises(ValueError):
        forward_teacher(zero_weights(SMALL), np.ones((1, 3, 3)), np.ones((1, 3, 1)), np.ones((1, 3)), SMALL)


def test_rnn_cell():
    config = NetworkConfig(cell="rnn", hidden_size=3)
    w = random_weights(config, 9)
    h, x, q = np.full((1, 3), 0.1), np.full((1, 3), 0.2), np.full((1, 1), 0.3)
    expected = np.tanh(h @ w["recurrent_hidden"].T + x @ w["recurrent_input"].T + q @ w["recurrent_motion"].T
                       + w["state_bias"])
    np.testing.assert_allclose(rnn_step(h, x, q, w), expected, rtol=1e-14)
    assert forward_teacher(w, np.ones((1, 2, 3)), np.ones((1, 2, 1)), np.ones((1, 3)), config).shape == (1, 1)


def test_init_weights_bounds_and_zero_biases():
    config = NetworkConfig()
    w = init_weights(config, np.random.default_rng(0))
    check_weights(w, config)
    bound = 1 / math.sqrt(50)
    for name, value in w.items():
        if name.endswith("_bias"):
            assert np.all(value == 0)
        else:
            assert np.all(np.abs(value) <= bound)


def test_check_weights_rejects_bad_sets():
    w = zero_weights(SMALL)
    with pytest.raises(ValueError, match="mismatch"):
        check_weights({k: v for k, v in w.items() if k != "readout"}, SMALL)
    with pytest.raises(ValueError, match="shape"):
        check_weights({**w, "readout": np.zeros((1, 4))}, SMALL)
    with pytest.raises(ValueError, match="non-finite"):
        check_weights({**w, "readout": np.full((1, 3), np.nan)}, SMALL)


def test_make_windows_layout():
    inputs = np.arange(10.0)[:, None] * np.ones((1, 3))
    q = np.arange(10.0) * 10
    win = make_windows(inputs, q, 2)
    assert len(win) == 8
    np.testing.assert_array_equal(win.q_hist[0, :, 0], [0, 10])
    np.testing.assert_array_equal(win.x_cur[0], [2, 2, 2])
    np.testing.assert_array_equal(win.target[-1], [90])
    with pytest.raises(ValueError):
        make_windows(inputs[:2], q[:2], 2)


def test_rollout_constant_network():
    w = zero_weights(SMALL)
    w["readout_bias"] = np.array([0.42])
    pred = rollout(w, np.random.default_rng(0).normal(size=(20, 3)), [1.0, 2.0], SMALL)
    np.testing.assert_array_equal(pred[:2], [1.0, 2.0])
    np.testing.assert_array_equal(pred[2:], 0.42)


def test_rollout_first_step_matches_teacher_forcing():
    w = random_weights(SMALL, 10)
    rng = np.random.default_rng(11)
    inputs, q = rng.normal(size=(15, 3)), rng.normal(size=15)
    pred = rollout(w, inputs, q[:2], SMALL)
    win = make_windows(inputs, q, 2)
    teacher = forward_teacher(w, win.x_hist[:1], win.q_hist[:1], win.x_cur[:1], SMALL)
    assert pred[2] == teacher[0, 0]


def test_rollout_feeds_back_predictions():
    w = random_weights(SMALL, 12)
    inputs = np.random.default_rng(13).normal(size=(6, 3))
    pred = rollout(w, inputs, [0.1, 0.2], SMALL)
    manual = forward_teacher(w, inputs[None, 2:4], pred[2:4].reshape(1, 2, 1), inputs[None, 4], SMALL)
    assert pred[4] == manual[0, 0]


def test_rollout_validation():
    with pytest.raises(ValueError):
        rollout(zero_weights(SMALL), np.ones((2, 3)), [0.0, 0.0], SMALL)
    with pytest.raises(ValueError):
        rollout(zero_weights(SMALL), np.ones((5, 3)), [0.0], SMALL)


def test_noise_zero_sigma_is_identity():
    q = np.random.default_rng(0).normal(size=(5, 2, 1))
    out = augment_motion_noise(q, 0.0, np.random.default_rng(1))
    np.testing.assert_array_equal(out, q)
    assert out is not q


def test_noise_statistics():
    sigma, n = 0.01, 100_000
    q = np.full((n, 1, 1), 0.5)
    noise = augment_motion_noise(q, sigma, np.random.default_rng(123)) - q
    assert abs(noise.mean()) < 3 * sigma / math.sqrt(n)
    assert abs(noise.std() / sigma - 1) < 0.02
    np.testing.assert_array_equal(q, 0.5)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        augment_motion_noise(np.zeros(3), -0.1, np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(cell="lstm")
    with pytest.raises(ValueError):
        NetworkConfig(hidden_size=0)


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (4, 3), elements=finite),
       arrays(np.float64, (4, 1), elements=finite), st.integers(0, 1000))
def test_gates_open_interval_and_convex_update(h_prev, x, q, seed):
    w = random_weights(SMALL, seed, scale=0.5)
    w["state_bias"] = np.zeros(3)
    h = gru_history_step(h_prev, x, q, w)
    reset_pre = h_prev @ w["reset_hidden"].T + x @ w["reset_input"].T + q @ w["reset_motion"].T + w["reset_bias"]
    gate = 1 / (1 + np.exp(-reset_pre))
    assert np.all((gate > 0) & (gate < 1))
    drive = gate * (h_prev @ w["candidate_hidden"].T) + x @ w["candidate_input"].T + q @ w["candidate_motion"].T
    drive = drive + w["candidate_bias"]
    cand = np.tanh(drive)
    tol = 1e-12
    assert np.all(h >= np.minimum(h_prev, cand) - tol)
    assert np.all(h <= np.maximum(h_prev, cand) + tol)


def test_weights_shared_across_steps():
    seen = []

    class Spy(dict):
        def __getitem__(self, key):
            value = super().__getitem__(key)
            seen.append((key, id(value)))
            return value

    w = Spy(random_weights(SMALL, 14))
    forward_teacher(w, np.ones((1, 2, 3)), np.ones((1, 2, 1)), np.ones((1, 3)), SMALL)
    ids = {}
    for key, ident in seen:
        ids.setdefault(key, set()).add(ident)
    assert all(len(v) == 1 for v in ids.values())
    assert sum(1 for key, _ in seen if key == "reset_hidden") == 3
