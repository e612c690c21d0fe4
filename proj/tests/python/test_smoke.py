import numpy as np
import pytest

import qsonn


def naive_conv(x, w, b, pad):
    ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh, ow = h + 2 * pad - kh + 1, wd + 2 * pad - kw + 1
    out = np.zeros((co, oh, ow))
    for o in range(co):
        for i in range(oh):
            for j in range(ow):
                out[o, i, j] = np.sum(xp[:, i:i + kh, j:j + kw] * w[o]) + b[o]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_conv2d_matches_numpy(rng):
    x = rng.uniform(-1, 1, (2, 6, 7)).astype(np.float32)
    w = rng.uniform(-0.5, 0.5, (3, 2, 3, 3)).astype(np.float32)
    b = rng.uniform(-0.5, 0.5, 3).astype(np.float32)
    y = qsonn.conv2d(x, w, b, pad=1)
    assert y.shape == (3, 6, 7)
    np.testing.assert_allclose(y, naive_conv(x, w, b, 1), atol=1e-5)


def test_qselfonn_with_zero_quad_is_selfonn(rng):
    x = rng.uniform(-1, 1, (2, 5, 5)).astype(np.float32)
    w = rng.uniform(-0.5, 0.5, (3, 4, 2, 3, 3)).astype(np.float32)
    b = rng.uniform(-0.5, 0.5, 4).astype(np.float32)
    quad = np.zeros((3, 4, 2, 9, 9), dtype=np.float32)
    np.testing.assert_array_equal(qsonn.qselfonn(x, w, quad, b), qsonn.selfonn(x, w, b))
    np.testing.assert_array_equal(qsonn.selfonn(x, w[:1], b), qsonn.conv2d(x, w[0], b))


def test_qselfonn_quadratic_term(rng):
    x = rng.uniform(-1, 1, (1, 3, 3)).astype(np.float32)
    w = np.zeros((1, 1, 1, 3, 3), dtype=np.float32)
    quad = rng.uniform(-1, 1, (1, 1, 1, 9, 9)).astype(np.float32)
    y = qsonn.qselfonn(x, w, quad, np.zeros(1, dtype=np.float32))
    v = x.reshape(-1).astype(np.float64)
    assert y.shape == (1, 1, 1)
    assert y[0, 0, 0] == pytest.approx(v @ quad[0, 0, 0].astype(np.float64) @ v, abs=1e-5)


def test_features_shape_and_range():
    t = np.arange(16000) / 16000.0
    clip = (0.5 * np.sin(2 * np.pi * 1000 * t)).astype(np.float32)
    f = qsonn.extract_features(clip)
    assert f.shape == (1, 20, 51)
    assert f.min() == pytest.approx(-1.0) and f.max() == pytest.approx(1.0)
    assert qsonn.mfcc(clip[:8000]).shape == (20, 51)


def test_wav_round_trip(tmp_path, rng):
    samples = rng.uniform(-0.5, 0.5, 1600).astype(np.float32)
    path = str(tmp_path / "a.wav")
    qsonn.write_wav(path, samples)
    back, rate = qsonn.read_wav(path)
    assert rate == 16000
    np.testing.assert_allclose(back, samples, atol=1.0 / 32768)


def test_model_forward_and_costs():
    model = qsonn.Model(layer="conv", q=1)
    model.init(seed=0)
    assert model.parameter_count == 20630
    assert qsonn.count_costs("conv")["params"] == 20630
    logits = model.forward(np.zeros((1, 20, 51), dtype=np.float32))
    assert logits.shape == (10,)
    params = model.parameters()
    assert params["dense.weight"].shape == (10, 1680)
    macs = [qsonn.count_costs(k, q)["macs"] for k, q in (("conv", 1), ("selfonn", 3), ("qselfonn", 3))]
    assert macs == sorted(macs) and len(set(macs)) == 3


def test_grad_check():
    for layer, q in (("conv", 1), ("selfonn", 3), ("qselfonn", 2)):
        assert qsonn.grad_check(layer, q)["max_rel_error"] < 1e-4
    assert qsonn.grad_check("qselfonn", 2, "upper")["max_rel_error"] < 1e-4


def test_save_load_round_trip(tmp_path, rng):
    model = qsonn.Model(layer="qselfonn", q=2)
    model.init(seed=3)
    path = str(tmp_path / "m.ckpt")
    model.save(path)
    loaded = qsonn.Model.load(path)
    assert loaded.layer == "qselfonn" and loaded.q == 2
    x = rng.uniform(-1, 1, (1, 20, 51)).astype(np.float32)
    np.testing.assert_array_equal(model.forward(x), loaded.forward(x))


def test_errors(tmp_path):
    model = qsonn.Model(layer="conv", q=1)
    with pytest.raises(qsonn.ShapeError):
        model.forward(np.zeros((1, 10, 10), dtype=np.float32))
    with pytest.raises(qsonn.ShapeError):
        model.set_parameter("dense.bias", np.zeros(3, dtype=np.float32))
    with pytest.raises(qsonn.IoError):
        qsonn.Model.load(str(tmp_path / "missing.ckpt"))
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(qsonn.FormatError):
        qsonn.Model.load(str(bad))
    with pytest.raises(qsonn.ConfigError):
        qsonn.Model(layer="conv", q=3)
    assert issubclass(qsonn.RateError, qsonn.FormatError)
    assert issubclass(qsonn.Error, RuntimeError)


def test_tiny_training_run(rng):
    x = rng.uniform(-1, 1, (20, 1, 20, 51)).astype(np.float32)
    y = [i % 2 for i in range(20)]
    x[np.array(y) == 1, 0, :10, :] += 0.8
    model = qsonn.Model(layer="selfonn", q=2, dropout=0.0)
    model.init(seed=1)
    report, best = qsonn.train(model, x, y, x, y, lr=0.01, batch_size=5, max_epochs=3, patience=3, seed=1)
    assert len(report["epochs"]) == 3
    assert report["stop_reason"] in ("max_epochs", "patience")
    assert qsonn.evaluate(best, x, y) == pytest.approx(report["best_val_acc"])
