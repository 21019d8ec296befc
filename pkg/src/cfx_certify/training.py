"""Mini-batch SGD for ReLU networks, including incremental (partial-fit style) retraining."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .network import FFNN, classify_batch

LOSSES = ("binary-cross-entropy", "softmax-cross-entropy")


class TrainingDivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int | tuple = 10
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    loss: str = "softmax-cross-entropy"

    def __post_init__(self):
        sizes = (self.hidden_size,) if isinstance(self.hidden_size, int) else tuple(self.hidden_size)
        if any(int(h) < 1 for h in sizes):
            raise ValueError("hidden sizes must be positive")
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate must be >= 0, batch_size >= 1, epochs >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    @property
    def hidden_sizes(self) -> tuple:
        if isinstance(self.hidden_size, int):
            return (self.hidden_size,)
        return tuple(int(h) for h in self.hidden_size)


def initial_model(n_inputs: int, n_classes: int, cfg: TrainConfig) -> FFNN:
    """Glorot-uniform initialisation, biases included, drawn from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.loss == "binary-cross-entropy":
        if n_classes != 2:
            raise ValueError("binary cross-entropy needs exactly two classes")
        n_out, mode = 1, "single-sigmoid"
    else:
        n_out = n_classes
        mode = "two-logit" if n_classes == 2 else "multiclass"
    sizes = [n_inputs, *cfg.hidden_sizes, n_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return FFNN(tuple(weights), tuple(biases), mode)


def loss_and_gradients(weights, biases, X, y, loss: str):
    """Mean loss over the batch and its gradients w.r.t. every weight and bias."""
    acts = [X]
    v = X
    for w, b in zip(weights[:-1], biases[:-1]):
        v = np.maximum(v @ w.T + b, 0.0)
        acts.append(v)
    z = v @ weights[-1].T + biases[-1]
    n = X.shape[0]
    if loss == "binary-cross-entropy":
        s = z[:, 0]
        # log(1 + exp(-|s|)) form keeps the loss finite for large logits.
        value = np.mean(np.maximum(s, 0) - s * y + np.log1p(np.exp(-np.abs(s))))
        grad_z = ((1.0 / (1.0 + np.exp(-s)) - y) / n)[:, None]
    else:
        shifted = z - z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(shifted).sum(axis=1))
        value = np.mean(logsum - shifted[np.arange(n), y])
        probs = np.exp(shifted - logsum[:, None])
        probs[np.arange(n), y] -= 1.0
        grad_z = probs / n
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    delta = grad_z
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * (acts[i] > 0)
    return float(value), gw, gb


def _sgd(model: FFNN, data: Dataset, cfg: TrainConfig) -> FFNN:
    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    X, y = data.X, data.y
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            # Overflow shows up as a non-finite loss, which is reported below.
            with np.errstate(over="ignore", invalid="ignore"):
                value, gw, gb = loss_and_gradients(weights, biases, X[idx], y[idx], cfg.loss)
            if not np.isfinite(value):
                raise TrainingDivergenceError(f"non-finite loss {value}")
            with np.errstate(over="ignore", invalid="ignore"):
                for i in range(len(weights)):
                    weights[i] -= cfg.learning_rate * gw[i]
                    biases[i] -= cfg.learning_rate * gb[i]
    for p in weights + biases:
        if not np.all(np.isfinite(p)):
            raise TrainingDivergenceError("parameters became non-finite")
    return model.with_parameters(weights, biases)


def _check_data(data: Dataset, n_inputs: int | None = None):
    if n_inputs is not None and data.X.shape[1] != n_inputs:
        raise ValueError(f"data has {data.X.shape[1]} columns, model expects {n_inputs}")


def train(data: Dataset, cfg: TrainConfig, n_classes: int | None = None) -> FFNN:
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if n_classes is None:
        n_classes = max(2, int(data.y.max()) + 1)
    if data.y.min() < 0 or data.y.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    model = initial_model(data.X.shape[1], n_classes, cfg)
    return _sgd(model, data, cfg)


def retrain_incremental(model: FFNN, subset: Dataset, cfg: TrainConfig) -> FFNN:
    """Continue SGD from the current parameters; topology and hidden sizes are kept.

    Only ``learning_rate``, ``batch_size``, ``epochs``, ``seed`` and ``loss`` of
    ``cfg`` are used.
    """
    if len(subset) == 0:
        return model
    _check_data(subset, model.n_inputs)
    if subset.y.min() < 0 or subset.y.max() >= model.n_classes:
        raise ValueError(f"labels must lie in 0..{model.n_classes - 1}")
    expected = "binary-cross-entropy" if model.output_mode == "single-sigmoid" else "softmax-cross-entropy"
    if cfg.loss != expected:
        cfg = TrainConfig(cfg.hidden_size, cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.seed, expected)
    return _sgd(model, subset, cfg)


def accuracy(model: FFNN, data: Dataset) -> float:
    if len(data) == 0:
        return float("nan")
    return float(np.mean(classify_batch(model, data.X) == data.y))
