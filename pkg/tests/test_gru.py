import math

import numpy as np
import pytest

from kunie.gru import (PARAM_ORDER, CheckpointError, GruConfig, GruModel, TrainingDivergedError,
                       clip_gradients, generate, gru_forward, load_checkpoint, loss_and_grads,
                       prepare_training_data, save_checkpoint, sliding_windows, train, train_windows)
from kunie.keys import KeyBundle, iterate_scphm
from kunie.maps import MapParams

WEAK_KEYS = KeyBundle(0.1, 0.2, 0.8, 3.0, 1000)


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def test_zero_weights_output_the_squashed_bias():
    m = GruModel.zeros(4, 3)
    m.bo[0] = 0.7
    assert gru_forward(m, [0.0, 0.0, 0.0]) == pytest.approx(sig(0.7))
    assert gru_forward(GruModel.zeros(4, 3), [0.3, 0.9, 0.1]) == 0.5


def test_single_unit_by_hand():
    m = GruModel.zeros(1, 2)
    m.Wz[:] = 0.5
    m.Uz[:] = -0.3
    m.bz[:] = 0.1
    m.Wr[:] = -0.4
    m.Ur[:] = 0.8
    m.br[:] = 0.2
    m.Wh[:] = 1.5
    m.Uh[:] = 0.7
    m.bh[:] = -0.1
    m.Wo[:] = 2.0
    m.bo[:] = -0.5
    h = 0.0
    for x in (0.3, 0.8):
        z = sig(0.5 * x - 0.3 * h + 0.1)
        r = sig(-0.4 * x + 0.8 * h + 0.2)
        hc = math.tanh(1.5 * x + 0.7 * r * h - 0.1)
        h = (1 - z) * h + z * hc
    assert gru_forward(m, [0.3, 0.8]) == pytest.approx(sig(2.0 * h - 0.5), rel=1e-14)


def test_window_length_checked():
    with pytest.raises(ValueError):
        gru_forward(GruModel.zeros(2, 3), [0.1, 0.2])


def test_gradients_match_central_differences():
    rng = np.random.default_rng(0)
    m = GruModel.initialise(1, 5, seed=3)
    for k in PARAM_ORDER:
        getattr(m, k)[...] += rng.normal(0, 0.5, getattr(m, k).shape)
    X = rng.uniform(0, 1, (7, 5))
    Y = rng.uniform(0, 1, 7)
    _, grads = loss_and_grads(m, X, Y)
    eps = 1e-6
    for k in PARAM_ORDER:
        arr = getattr(m, k)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up, _ = loss_and_grads(m, X, Y)
            arr[idx] = old - eps
            down, _ = loss_and_grads(m, X, Y)
            arr[idx] = old
            fd = (up - down) / (2 * eps)
            assert grads[k][idx] == pytest.approx(fd, rel=1e-4, abs=1e-10), k


def test_gradients_match_for_several_units():
    rng = np.random.default_rng(1)
    m = GruModel.initialise(3, 4, seed=1)
    X = rng.uniform(0, 1, (5, 4))
    Y = rng.uniform(0, 1, 5)
    _, grads = loss_and_grads(m, X, Y)
    eps = 1e-6
    for k in ("Uh", "Ur", "Wz", "bo"):
        arr = getattr(m, k)
        idx = tuple(s - 1 for s in arr.shape)
        old = arr[idx]
        arr[idx] = old + eps
        up, _ = loss_and_grads(m, X, Y)
        arr[idx] = old - eps
        down, _ = loss_and_grads(m, X, Y)
        arr[idx] = old
        assert grads[k][idx] == pytest.approx((up - down) / (2 * eps), rel=1e-4)


def test_constant_series_is_learned():
    data = np.full(400, 0.7)
    res = train(data, GruConfig(hidden_units=4, sequence_length=5, learning_rate=0.5, epochs=50,
                                batch_size=32))
    assert res.losses[-1] < 1e-4
    assert res.losses[-1] < res.losses[0] / 100


def test_training_is_deterministic():
    data = np.sin(np.arange(300) * 0.3) * 0.5 + 0.5
    cfg = GruConfig(hidden_units=3, sequence_length=6, epochs=3, batch_size=16, seed=5)
    a, b = train(data, cfg), train(data, cfg)
    assert a.losses == b.losses
    assert all(np.array_equal(a.model.params()[k], b.model.params()[k]) for k in PARAM_ORDER)


def test_divergence_raises():
    X = np.array([[np.nan, 0.1]])
    with pytest.raises(TrainingDivergedError):
        train_windows(X, np.array([0.5]), GruConfig(hidden_units=2, sequence_length=2, epochs=1))


def test_clip_gradients_scales_to_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_gradients(g, 1.0) == 5.0
    assert math.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        GruConfig(hidden_units=0)
    with pytest.raises(ValueError):
        sliding_windows(np.arange(3.0), 3)


def test_prepare_training_data(fixed_keys):
    d = prepare_training_data(fixed_keys)
    assert d.size == 24_000
    assert d.min() == 0.0 and d.max() == 1.0
    xs, _ = iterate_scphm(fixed_keys.x0, fixed_keys.y0, MapParams(fixed_keys.a, fixed_keys.b), 6001)
    raw = np.asarray(iterate_scphm(fixed_keys.x0, fixed_keys.y0, fixed_keys.params, 30_000)[0][6000:])
    assert raw[0] == xs[6000]
    np.testing.assert_allclose(d, (raw - raw.min()) / (raw.max() - raw.min()))


def test_checkpoint_round_trip(tmp_path):
    m = GruModel.initialise(5, 7, seed=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert back.sequence_length == 7 and back.hidden_units == 5
    for k in PARAM_ORDER:
        np.testing.assert_array_equal(back.params()[k], m.params()[k])


@pytest.mark.parametrize("mutate, msg", [
    (lambda b: b"XGRU" + b[4:], "magic"),
    (lambda b: b[:4] + b"\x09\x00" + b[6:], "version"),
    (lambda b: b[:8], "truncated"),
    (lambda b: b[:-8], "expected"),
])
def test_checkpoint_errors(tmp_path, mutate, msg):
    path = tmp_path / "m.ckpt"
    save_checkpoint(GruModel.initialise(2, 3), path)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(CheckpointError, match=msg):
        load_checkpoint(path)


def test_non_finite_model_not_saved(tmp_path):
    m = GruModel.zeros(2)
    m.bo[0] = np.inf
    with pytest.raises(ValueError):
        save_checkpoint(m, tmp_path / "m.ckpt")


def test_generate_empty_and_bounded():
    m = GruModel.initialise(4, 3, seed=1)
    assert generate(m, [0.1, 0.2, 0.3], 0).size == 0
    out = generate(m, [0.1, 0.2, 0.3], 200)
    assert out.shape == (200,) and np.all((out >= 0) & (out <= 1))


@pytest.fixture(scope="module")
def weak_run():
    data = prepare_training_data(WEAK_KEYS)
    cfg = GruConfig(hidden_units=8, sequence_length=10, learning_rate=0.3, epochs=10)
    return data, train(data, cfg)


def test_loss_falls_tenfold_on_a_learnable_orbit(weak_run):
    _, res = weak_run
    assert res.losses[0] / res.losses[-1] >= 10
    smooth = np.convolve(res.losses, np.ones(5) / 5, mode="valid")
    assert np.all(np.diff(smooth) <= 0)


def test_generated_sequence_departs_from_the_orbit(weak_run):
    data, res = weak_run
    seq = res.model.sequence_length
    out = generate(res.model, data[:seq], 1000)
    assert np.all(np.isfinite(out))
    assert np.max(np.abs(out - data[seq:seq + 1000])) > 1e-3
