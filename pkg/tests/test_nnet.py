import numpy as np
import pytest

from icsc.nnet import (
    SGD, Adam, Conv1D, Dense, GlobalAveragePool1D, ReLU, Sequential, Softmax, TrainConfig, TrainingDiverged,
    conv1d_backward, conv1d_forward, gradient_check, load_model, mse_loss, save_model, softmax, softmax_xent,
    train,
)
from icsc.scenario_id import classifier_specs


def naive_conv(x, kernel, bias):
    """Direct same-padded cross-correlation loop, used as the oracle."""
    b, length, cin = x.shape
    k, _, cout = kernel.shape
    pad = (k - 1) // 2
    out = np.zeros((b, length, cout))
    for n in range(b):
        for t in range(length):
            for j in range(k):
                s = t + j - pad
                if 0 <= s < length:
                    out[n, t] += x[n, s] @ kernel[j]
    return out + bias


def test_conv_matches_naive_loop():
    rng = np.random.default_rng(0)
    x, w, b = rng.normal(size=(3, 16, 2)), rng.normal(size=(9, 2, 4)), rng.normal(size=4)
    out, _ = conv1d_forward(x, w, b)
    assert np.allclose(out, naive_conv(x, w, b), atol=1e-12)


def test_identity_kernel_passes_input_through():
    x = np.random.default_rng(1).normal(size=(2, 16, 2))
    w = np.zeros((9, 2, 2))
    w[4] = np.eye(2)
    out, _ = conv1d_forward(x, w)
    assert np.allclose(out, x)


def test_conv_rejects_even_kernel_and_channel_mismatch():
    with pytest.raises(ValueError):
        conv1d_forward(np.zeros((1, 8, 2)), np.zeros((4, 2, 1)))
    with pytest.raises(ValueError):
        conv1d_forward(np.zeros((1, 8, 3)), np.zeros((3, 2, 1)))


def test_conv_backward_input_gradient_numeric():
    rng = np.random.default_rng(2)
    x, w = rng.normal(size=(1, 16, 2)), rng.normal(size=(9, 2, 4))
    dout = rng.normal(size=(1, 16, 4))
    _, cache = conv1d_forward(x, w)
    dx, _, _ = conv1d_backward(dout, cache)
    h = 1e-6
    for idx in [(0, 0, 0), (0, 7, 1), (0, 15, 0), (0, 3, 1)]:
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        num = (np.sum(conv1d_forward(xp, w)[0] * dout) - np.sum(conv1d_forward(xm, w)[0] * dout)) / (2 * h)
        assert dx[idx] == pytest.approx(num, rel=1e-6)


def test_conv_layer_gradient_check():
    rng = np.random.default_rng(3)
    model = Sequential([Conv1D(2, 4, 9, rng=rng)], (16, 2))
    x, target = rng.normal(size=(2, 16, 2)), rng.normal(size=(2, 16, 4))
    assert gradient_check(model, x, target, loss=mse_loss) < 1e-6


def test_dense_layer_gradient_check():
    rng = np.random.default_rng(4)
    model = Sequential([Dense(6, 5, rng=rng)], (6,))
    x = rng.normal(size=(4, 6))
    assert gradient_check(model, x, rng.integers(0, 5, 4)) < 1e-6


def test_full_classifier_gradient_check():
    model = Sequential.from_specs(classifier_specs(), (53, 2), seed=5)
    x = np.random.default_rng(5).normal(size=(4, 53, 2))
    assert gradient_check(model, x, np.array([0, 1, 2, 1]), n_params=300) < 1e-4


def test_softmax_layer_gradient_check():
    rng = np.random.default_rng(6)
    model = Sequential([Dense(3, 4, rng=rng), Softmax()], (3,))
    assert gradient_check(model, rng.normal(size=(5, 3)), rng.normal(size=(5, 4)), loss=mse_loss) < 1e-6


def test_parameterless_model_gradient_check_is_zero():
    model = Sequential([ReLU(), GlobalAveragePool1D()], (8, 2))
    assert model.n_params == 0
    assert gradient_check(model, np.ones((1, 8, 2)), np.zeros(1, dtype=int)) == 0.0


def test_softmax_uniform_logits_loss_is_ln3():
    loss, grad = softmax_xent(np.zeros((4, 3)), [0, 1, 2, 0])
    assert loss == pytest.approx(np.log(3))
    assert np.allclose(grad.sum(axis=1), 0.0)
    assert np.allclose(softmax(np.array([1e4, 0.0, -1e4])), [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        softmax_xent(np.zeros((1, 3)), [3])


def test_zero_learning_rate_leaves_parameters_unchanged():
    model = Sequential.from_specs(classifier_specs(n_conv=1, filters=4), (53, 2), seed=0)
    before = [p.copy() for p in model.parameters()]
    X = np.random.default_rng(0).normal(size=(20, 53, 2))
    train(model, X, np.arange(20) % 3, TrainConfig(batch_size=5, epochs=2, learning_rate=0.0))
    assert all(np.array_equal(a, b) for a, b in zip(before, model.parameters()))


def _toy_set(n=90, seed=0):
    """Three classes told apart by which channel carries a constant offset."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 3
    X = 0.1 * rng.normal(size=(n, 16, 2))
    X[y == 1, :, 0] += 1.0
    X[y == 2, :, 1] += 1.0
    return X, y


def test_separable_toy_set_reaches_full_accuracy():
    X, y = _toy_set()
    model = Sequential.from_specs(classifier_specs(n_conv=1, filters=8, kernel=3), (16, 2), seed=1)
    _, hist = train(model, X, y, TrainConfig(batch_size=30, epochs=60, learning_rate=1e-2))
    assert hist[-1] < hist[0]
    assert np.mean(np.argmax(model.forward(X), axis=1) == y) == 1.0


def test_training_is_deterministic():
    X, y = _toy_set()
    runs = []
    for _ in range(2):
        model = Sequential.from_specs(classifier_specs(n_conv=1, filters=4, kernel=3), (16, 2), seed=2)
        train(model, X, y, TrainConfig(batch_size=16, epochs=3, seed=9))
        runs.append(model.parameters())
    assert all(np.array_equal(a, b) for a, b in zip(*runs))


def test_adam_first_step_moves_by_learning_rate():
    p = np.array([1.0, -2.0, 3.0])
    Adam([p], lr=0.1).step([np.array([0.5, -4.0, 1e-3])])
    assert np.allclose(p, [0.9, -1.9, 2.9], atol=1e-6)
    q = np.array([1.0])
    SGD([q], lr=0.5).step([np.array([2.0])])
    assert q[0] == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_diverged_on_nonfinite_loss():
    model = Sequential([Dense(2, 3)], (2,))
    X = np.array([[np.inf, 0.0]] * 4)
    with pytest.raises(TrainingDiverged):
        train(model, X, np.zeros(4, dtype=int), TrainConfig(batch_size=2, epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_model_serialization_roundtrip(tmp_path):
    model = Sequential.from_specs(classifier_specs(n_conv=2, filters=4), (53, 2), seed=3)
    x = np.random.default_rng(0).normal(size=(3, 53, 2))
    save_model(model, tmp_path / "m.json", {"note": "x"})
    loaded, meta = load_model(tmp_path / "m.json")
    assert meta == {"note": "x"}
    assert np.array_equal(loaded.forward(x), model.forward(x))
    assert loaded.specs() == model.specs()


def test_shape_validation():
    with pytest.raises(ValueError):
        Sequential([Conv1D(3, 4)], (16, 2))
    with pytest.raises(ValueError):
        Sequential([Dense(4, 2)], (3,))
