import logging

import numpy as np
import pytest

from kwscl.errors import ShapeError
from kwscl.features import FeaturePair
from kwscl.nn import (PATH_LATENT, TrainConfig, backward, bce_with_logits, conv2d_backward, conv2d_forward,
                      forward, forward_batch, init_model, param_count, param_shapes, predict_proba,
                      sigmoid, train, train_arrays)

from oracles import conv2d_loops, gradient_check


def test_param_counts():
    assert param_count(init_model("dual")) == 1595
    assert param_count(init_model("single")) == 798
    path = sum(int(np.prod(s)) for k, s in param_shapes("single").items() if k.startswith("mfcc."))
    assert path == 637 == 25 * 1 * 5 + 5 + 25 * 5 * 2 + 2 + 25 * 2 * 5 + 5


def test_shape_chain(rng):
    model = init_model("dual", 1)
    _, latent, cache = forward_batch(model, rng.normal(size=(2, 20, 16)), rng.normal(size=(2, 20, 16)))
    for p in ("mfcc", "logmel"):
        assert [a.shape[1:] for a in cache.acts[p]] == [(5, 16, 12), (2, 12, 8), (5, 8, 4)]
    assert latent.shape == (2, 320) and PATH_LATENT == 160


def test_single_model(rng):
    model = init_model("single", 0)
    z, latent, _ = forward_batch(model, rng.normal(size=(3, 20, 16)), None)
    assert latent.shape == (3, 160) and z.shape == (3,)


def test_conv_output_shape(rng):
    w = rng.normal(size=(5, 1, 5, 5))
    assert conv2d_forward(rng.normal(size=(1, 20, 16)), w, np.zeros(5)).shape == (5, 16, 12)


def test_conv_zero_weights():
    out = conv2d_forward(np.ones((1, 20, 16)), np.zeros((3, 1, 5, 5)), np.array([0.7, -0.2, 0.0]))
    np.testing.assert_array_equal(out[0], 0.7)
    np.testing.assert_array_equal(out[1], 0.0)


def test_conv_delta_kernel(rng):
    x = rng.normal(size=(1, 20, 16))
    w = np.zeros((1, 1, 5, 5))
    w[0, 0, 2, 2] = 1.0
    out = conv2d_forward(x, w, np.zeros(1), relu=False)
    np.testing.assert_array_equal(out[0], x[0, 2:18, 2:14])


def test_conv_matches_loops(rng):
    x = rng.normal(size=(2, 9, 7))
    w = rng.normal(size=(3, 2, 5, 5))
    b = rng.normal(size=3)
    np.testing.assert_allclose(conv2d_forward(x, w, b, relu=False), conv2d_loops(x, w, b), atol=1e-12)


def test_conv_shape_errors(rng):
    with pytest.raises(ShapeError):
        conv2d_forward(rng.normal(size=(2, 20, 16)), np.zeros((5, 1, 5, 5)), np.zeros(5))
    with pytest.raises(ShapeError):
        conv2d_forward(rng.normal(size=(1, 4, 16)), np.zeros((5, 1, 5, 5)), np.zeros(5))


def test_conv_backward_input_grad(rng):
    # d/dx of sum(out * g) by finite differences (linear, so exact up to rounding)
    x = rng.normal(size=(1, 2, 8, 7))
    w = rng.normal(size=(3, 2, 5, 5))
    g = rng.normal(size=(1, 3, 4, 3))
    dx, dw, db = conv2d_backward(x, w, g)
    f = lambda xx: np.sum(conv2d_forward(xx, w, np.zeros(3), relu=False) * g)
    for _ in range(10):
        idx = tuple(rng.integers(s) for s in x.shape)
        e = np.zeros_like(x)
        e[idx] = 1e-6
        assert (f(x + e) - f(x - e)) / 2e-6 == pytest.approx(dx[idx], rel=1e-6, abs=1e-8)
    np.testing.assert_allclose(db, g.sum(axis=(0, 2, 3)))


def test_forward_zero_model():
    model = init_model("dual")
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    pair = FeaturePair(np.ones((20, 16)), np.ones((20, 16)))
    prob, latent = forward(model, pair)
    assert prob == 0.5 and latent.shape == (320,)


def test_paths_not_symmetric(rng):
    model = init_model("dual", 3)
    a, b = rng.normal(size=(20, 16)), rng.normal(size=(20, 16))
    p1, _ = forward(model, FeaturePair(a, b))
    p2, _ = forward(model, FeaturePair(b, a))
    assert p1 != p2


def test_mfcc_path_first(rng):
    model = init_model("dual", 3)
    m, l = rng.normal(size=(1, 20, 16)), rng.normal(size=(1, 20, 16))
    _, latent, cache = forward_batch(model, m, l)
    np.testing.assert_array_equal(latent[0, :160], cache.acts["mfcc"][-1].ravel())


def test_gradients_match_finite_differences():
    errors = gradient_check(n_coords=120, seed=0)
    assert max(errors) <= 1e-4


def test_gradients_single_arch():
    assert max(gradient_check(n_coords=40, seed=5, arch="single")) <= 1e-4


def test_head_bias_grad_zero_at_target():
    model = init_model("dual")
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    pair = FeaturePair(np.ones((20, 16)), np.ones((20, 16)))
    # prob is 0.5; with target 0.5 the BCE is stationary
    from kwscl.nn import loss_and_grads
    _, g = loss_and_grads(model, pair.mfcc, pair.logmel, [0.5])
    assert g["dense.bias"][0] == 0


def test_dead_relu_zero_grad(rng):
    model = init_model("dual", 0)
    model.params["mfcc.conv1.bias"][:] = -1e6  # every first-layer unit dead
    g = backward(model, FeaturePair(rng.normal(size=(20, 16)), rng.normal(size=(20, 16))), 1)
    assert not np.any(g["mfcc.conv1.weight"]) and not np.any(g["mfcc.conv1.bias"])
    assert np.any(g["logmel.conv1.weight"])


def test_sigmoid_and_bce_stable():
    assert sigmoid(1000.0) == 1.0 and sigmoid(-1000.0) == 0.0
    assert np.isfinite(bce_with_logits(np.array([800.0]), np.array([0.0])))
    assert bce_with_logits(np.array([0.0]), np.array([1.0])) == pytest.approx(np.log(2))


def _toy(rng, n=64):
    y = np.arange(n) % 2
    m = rng.normal(0, 0.1, (n, 20, 16)) + y[:, None, None] * 0.8
    l = rng.normal(0, 0.1, (n, 20, 16)) - y[:, None, None] * 0.5
    return m, l, y


def test_lr_zero_unchanged(rng):
    model = init_model("dual", 0)
    m, l, y = _toy(rng)
    new, _ = train_arrays(model, m, l, y, TrainConfig(learning_rate=0.0, epochs_per_update=2))
    for k in model.params:
        np.testing.assert_array_equal(new.params[k], model.params[k])


def test_loss_decreases_on_separable(rng):
    m, l, y = _toy(rng)
    _, losses = train_arrays(init_model("dual", 0), m, l, y,
                             TrainConfig(learning_rate=0.05, epochs_per_update=10, batch_size=64))
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_training_deterministic(rng):
    m, l, y = _toy(rng)
    cfg = TrainConfig(learning_rate=0.01, epochs_per_update=2, seed=4)
    a, _ = train_arrays(init_model("dual", 1), m, l, y, cfg)
    b, _ = train_arrays(init_model("dual", 1), m, l, y, cfg)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_single_class_warns(rng, caplog):
    m, l, _ = _toy(rng, 8)
    with caplog.at_level(logging.WARNING):
        train_arrays(init_model("dual"), m, l, np.ones(8), TrainConfig(epochs_per_update=1))
    assert "single class" in caplog.text


def test_train_on_pairs(rng):
    m, l, y = _toy(rng, 16)
    pairs = [FeaturePair(a, b, int(c)) for a, b, c in zip(m, l, y)]
    model, losses = train(init_model("dual"), pairs, TrainConfig(epochs_per_update=3))
    assert len(losses) == 3
    with pytest.raises(ValueError):
        train(init_model("dual"), [], TrainConfig())
    with pytest.raises(ValueError):
        train(init_model("dual"), [FeaturePair(m[0], l[0])], TrainConfig())


def test_adam_and_fake_quant_train(rng):
    m, l, y = _toy(rng, 32)
    for cfg in (TrainConfig(optimizer="adam", epochs_per_update=3), TrainConfig(fake_quant=True, epochs_per_update=1)):
        model, losses = train_arrays(init_model("dual"), m, l, y, cfg)
        assert np.isfinite(losses).all()
    with pytest.raises(ValueError):
        train_arrays(init_model("dual"), m, l, y, TrainConfig(optimizer="rmsprop"))


def test_predict_proba_chunks(rng):
    model = init_model("dual", 2)
    m, l = rng.normal(size=(10, 20, 16)), rng.normal(size=(10, 20, 16))
    np.testing.assert_allclose(predict_proba(model, m, l, chunk=3), predict_proba(model, m, l))


def test_init_unknown_arch():
    with pytest.raises(ValueError):
        init_model("triple")
