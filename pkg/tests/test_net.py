from dataclasses import replace

import numpy as np
import pytest

from conftest import linear_model, random_net
from nonuniform_robust.errors import DimensionMismatch
from nonuniform_robust.net import (
    MlpModel,
    TrainConfig,
    accuracy,
    forward,
    init_model,
    loss_and_grads,
    train_clean,
)


def test_zero_model_is_uniform():
    model = MlpModel((2, 3, 2), (np.zeros((3, 2)), np.zeros((2, 3))), (np.zeros(3), np.zeros(2)))
    _, probs = forward(model, np.array([0.3, -1.0]))
    np.testing.assert_allclose(probs, [0.5, 0.5])
    loss, _, _ = loss_and_grads(model, np.array([0.3, -1.0]), 1)
    assert loss == pytest.approx(np.log(2))


def test_linear_layer_softmax():
    logits, probs = forward(linear_model(np.eye(2)), np.array([1.0, -1.0]))
    np.testing.assert_allclose(logits, [1.0, -1.0])
    np.testing.assert_allclose(probs, [0.8807971, 0.1192029], atol=1e-6)


def test_relu_clips_hidden_layer():
    model = MlpModel((2, 2, 2), (np.eye(2), np.eye(2)), (np.zeros(2), np.zeros(2)))
    logits, _ = forward(model, np.array([-1.0, 2.0]))
    np.testing.assert_allclose(logits, [0.0, 2.0])


def test_softmax_shift_invariance():
    model = linear_model(np.eye(2), [0.0, 0.0])
    shifted = linear_model(np.eye(2), [7.5, 7.5])
    x = np.array([0.2, 0.4])
    np.testing.assert_allclose(forward(model, x)[1], forward(shifted, x)[1], atol=1e-12)


def test_linear_input_gradient():
    w = np.array([[1.0, -2.0], [0.5, 3.0]])
    x = np.array([0.3, -0.7])
    _, probs = forward(linear_model(w), x)
    _, _, grad = loss_and_grads(linear_model(w), x, 0)
    np.testing.assert_allclose(grad, w.T @ (probs - np.array([1.0, 0.0])), atol=1e-12)


def _loss(model, x, y):
    return loss_and_grads(model, x, y)[0]


def _with_param(model, kind, layer, index, value):
    arrays = [np.array(a) for a in getattr(model, kind)]
    arrays[layer][index] = value
    return replace(model, **{kind: tuple(arrays)})


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = random_net(rng, 3, (5, 4, 3))
    h = 1e-5
    for _ in range(5):
        x = rng.standard_normal(3)
        y = int(rng.integers(0, 2))
        _, grads, input_grad = loss_and_grads(model, x, y)

        numeric = np.array([
            (_loss(model, x + h * e, y) - _loss(model, x - h * e, y)) / (2 * h) for e in np.eye(3)
        ])
        np.testing.assert_allclose(input_grad, numeric, rtol=1e-5, atol=1e-8)

        for kind, analytic in (("weights", grads.weights), ("biases", grads.biases)):
            for layer, g in enumerate(analytic):
                for index in np.ndindex(g.shape):
                    base = getattr(model, kind)[layer][index]
                    up = _loss(_with_param(model, kind, layer, index, base + h), x, y)
                    down = _loss(_with_param(model, kind, layer, index, base - h), x, y)
                    assert g[index] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-8)


def test_batch_input_gradient_is_per_sample(rng):
    model = random_net(rng, 3, (4,))
    x = rng.standard_normal((6, 3))
    y = rng.integers(0, 2, 6)
    _, _, batch_grad = loss_and_grads(model, x, y)
    for i in range(6):
        np.testing.assert_allclose(batch_grad[i], loss_and_grads(model, x[i], y[i])[2], atol=1e-12)


def test_train_mode_without_dropout_matches_eval(rng):
    model = random_net(rng, 3, (4, 4))
    x = rng.standard_normal((5, 3))
    train_logits, _ = forward(model, x, mode="train", rng=np.random.default_rng(0))
    eval_logits, _ = forward(model, x)
    np.testing.assert_array_equal(train_logits, eval_logits)


def test_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        forward(random_net(rng, 3, (4,)), np.zeros(2))


def test_train_clean_separates_blobs(separable_blobs):
    model = init_model(2, 2, hidden=(16, 8), dropout_rate=0.0, seed=0)
    result = train_clean(model, separable_blobs, TrainConfig(epochs=100, seed=0))
    assert accuracy(result.model, separable_blobs) >= 0.95
    assert len(result.loss_trace) == 100


def test_training_is_deterministic(separable_blobs):
    cfg = TrainConfig(epochs=5, seed=11)
    a = train_clean(init_model(2, seed=11), separable_blobs, cfg).model
    b = train_clean(init_model(2, seed=11), separable_blobs, cfg).model
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
