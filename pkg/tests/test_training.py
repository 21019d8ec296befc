import numpy as np
import pytest

from cfx_certify.data import Dataset
from cfx_certify.network import FFNN
from cfx_certify.training import (TrainConfig, TrainingDivergenceError, accuracy, initial_model,
                                  loss_and_gradients, retrain_incremental, train)


def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = np.where(y[:, None] == 1, [0.75, 0.7], [0.25, 0.3]) + rng.normal(0, 0.07, (n, 2))
    return Dataset(np.clip(X, 0, 1), y)


@pytest.mark.parametrize("loss", ["softmax-cross-entropy", "binary-cross-entropy"])
def test_separable_blobs_are_learned(loss):
    data = blobs()
    model = train(data, TrainConfig(hidden_size=8, epochs=200, learning_rate=0.1, seed=1, loss=loss))
    assert accuracy(model, data) >= 0.95
    assert model.output_mode == ("single-sigmoid" if loss == "binary-cross-entropy" else "two-logit")


def test_same_seed_same_model():
    cfg = TrainConfig(hidden_size=5, epochs=5, seed=9)
    assert train(blobs(), cfg) == train(blobs(), cfg)


def test_zero_epochs_returns_initialisation():
    cfg = TrainConfig(hidden_size=4, epochs=0, seed=2)
    assert train(blobs(), cfg) == initial_model(2, 2, cfg)


@pytest.mark.parametrize("loss, n_out", [("binary-cross-entropy", 1), ("softmax-cross-entropy", 2),
                                         ("softmax-cross-entropy", 3)])
def test_gradients_match_finite_differences(loss, n_out):
    rng = np.random.default_rng(5)
    weights = [rng.normal(size=(3, 2)), rng.normal(size=(n_out, 3))]
    biases = [rng.normal(size=3), rng.normal(size=n_out)]
    X = rng.uniform(0, 1, size=(6, 2))
    y = rng.integers(0, max(2, n_out), size=6)
    _, gw, gb = loss_and_gradients(weights, biases, X, y, loss)
    h = 1e-5
    worst = 0.0
    for params, grads in ((weights, gw), (biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_and_gradients(weights, biases, X, y, loss)[0]
                p[idx] = old - h
                down = loss_and_gradients(weights, biases, X, y, loss)[0]
                p[idx] = old
                worst = max(worst, abs((up - down) / (2 * h) - g[idx]))
    assert worst < 1e-5


def test_retrain_empty_and_zero_rate():
    data = blobs()
    model = train(data, TrainConfig(hidden_size=4, epochs=3))
    assert retrain_incremental(model, data.subset([]), TrainConfig()) is model
    assert retrain_incremental(model, data, TrainConfig(learning_rate=0.0, epochs=3)) == model


def test_retrain_keeps_topology():
    data = blobs()
    model = train(data, TrainConfig(hidden_size=6, epochs=3))
    rng = np.random.default_rng(0)
    for seed in range(5):
        idx = rng.choice(len(data), size=2, replace=False)
        shifted = retrain_incremental(model, data.subset(idx), TrainConfig(epochs=2, seed=seed))
        assert shifted.same_topology(model)
        assert shifted != model


def test_retrain_width_mismatch():
    model = train(blobs(), TrainConfig(hidden_size=3, epochs=1))
    with pytest.raises(ValueError):
        retrain_incremental(model, Dataset(np.zeros((2, 3)), [0, 1]), TrainConfig())


def test_divergence_is_reported():
    data = Dataset(np.array([[1e200, 1e200], [1e200, 1e200]]), [0, 1])
    with pytest.raises(TrainingDivergenceError):
        train(data, TrainConfig(hidden_size=3, epochs=5, learning_rate=1e200, seed=0))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(hidden_size=0)
    with pytest.raises(ValueError):
        TrainConfig(loss="hinge")
