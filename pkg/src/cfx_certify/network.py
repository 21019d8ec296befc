"""Concrete ReLU feed-forward networks: inference, classification, JSON I/O."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

OUTPUT_MODES = ("two-logit", "multiclass", "single-sigmoid")


class ShapeError(ValueError):
    """Raised when array shapes do not match the network topology."""


class ModelFormatError(ValueError):
    """Raised when a model file cannot be parsed."""


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FFNN:
    """Fully connected network with ReLU hidden layers and an affine output layer.

    ``weights[i]`` has shape ``(layer_sizes[i + 1], layer_sizes[i])`` and
    ``biases[i]`` has length ``layer_sizes[i + 1]``.
    """

    weights: tuple
    biases: tuple
    output_mode: str = "two-logit"

    def __post_init__(self):
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise ShapeError("need one bias vector per weight matrix, and at least one layer")
        ws = tuple(_frozen(w, 2, f"weights[{i}]") for i, w in enumerate(self.weights))
        bs = tuple(_frozen(b, 1, f"biases[{i}]") for i, b in enumerate(self.biases))
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {i}: weights {w.shape} vs biases {b.shape}")
            if i > 0 and w.shape[1] != ws[i - 1].shape[0]:
                raise ShapeError(
                    f"layer {i}: expects {w.shape[1]} inputs, previous layer has {ws[i - 1].shape[0]}"
                )
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(f"unknown output_mode {self.output_mode!r}")
        n_out = ws[-1].shape[0]
        if self.output_mode == "single-sigmoid" and n_out != 1:
            raise ShapeError("single-sigmoid output requires exactly one output node")
        if self.output_mode == "two-logit" and n_out != 2:
            raise ShapeError("two-logit output requires exactly two output nodes")
        if self.output_mode == "multiclass" and n_out < 2:
            raise ShapeError("multiclass output requires at least two output nodes")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.weights) - 1

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def n_classes(self) -> int:
        return 2 if self.output_mode == "single-sigmoid" else self.n_outputs

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved layer by layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def same_topology(self, other: "FFNN") -> bool:
        return self.layer_sizes == other.layer_sizes

    def with_parameters(self, weights, biases) -> "FFNN":
        return FFNN(tuple(weights), tuple(biases), self.output_mode)

    def __eq__(self, other):
        if not isinstance(other, FFNN):
            return NotImplemented
        return (
            self.output_mode == other.output_mode
            and self.same_topology(other)
            and all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters()))
        )

    __hash__ = None

    def __repr__(self):
        return f"FFNN(layer_sizes={self.layer_sizes}, output_mode={self.output_mode!r})"


def check_input(model: FFNN, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.n_inputs:
        raise ShapeError(f"expected input of length {model.n_inputs}, got shape {x.shape}")
    return x


def hidden_activations(model: FFNN, x) -> list[np.ndarray]:
    """Post-ReLU values of every hidden layer (input excluded)."""
    v = check_input(model, x)
    out = []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        v = np.maximum(w @ v + b, 0.0)
        out.append(v)
    return out


def forward(model: FFNN, x) -> np.ndarray:
    """Output-layer values (pre-sigmoid for single-sigmoid models)."""
    v = check_input(model, x)
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        v = np.maximum(w @ v + b, 0.0)
    return model.weights[-1] @ v + model.biases[-1]


def forward_batch(model: FFNN, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise ShapeError(f"expected inputs of shape (n, {model.n_inputs}), got {X.shape}")
    v = X
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        v = np.maximum(v @ w.T + b, 0.0)
    return v @ model.weights[-1].T + model.biases[-1]


def decide(output_mode: str, y: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest tied index.
    if output_mode == "single-sigmoid":
        return int(y[0] > 0.0)
    return int(np.argmax(y))


def classify(model: FFNN, x) -> int:
    return decide(model.output_mode, forward(model, x))


def classify_batch(model: FFNN, X) -> np.ndarray:
    Y = forward_batch(model, X)
    if model.output_mode == "single-sigmoid":
        return (Y[:, 0] > 0.0).astype(int)
    return np.argmax(Y, axis=1)


# -- serialization -----------------------------------------------------------

def model_to_dict(model: FFNN) -> dict:
    return {
        "layer_sizes": model.layer_sizes,
        "output_mode": model.output_mode,
        "layers": [
            {"weights": w.tolist(), "biases": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ModelFormatError(f"{where}: non-finite value")
    return float(value)


def _matrix(rows, where: str) -> list[list[float]]:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ModelFormatError(f"{where}: expected a list of rows")
    return [[_number(v, f"{where}[{i}][{j}]") for j, v in enumerate(r)] for i, r in enumerate(rows)]


def model_from_dict(data: dict) -> FFNN:
    for key in ("layer_sizes", "output_mode", "layers"):
        if key not in data:
            raise ModelFormatError(f"missing field {key!r}")
    sizes = data["layer_sizes"]
    layers = data["layers"]
    if not isinstance(sizes, list) or not all(isinstance(s, int) and s > 0 for s in sizes):
        raise ModelFormatError("layer_sizes: expected a list of positive integers")
    if not isinstance(layers, list) or len(layers) != len(sizes) - 1:
        raise ModelFormatError(f"layers: expected {len(sizes) - 1} layers")
    weights, biases = [], []
    for i, layer in enumerate(layers):
        if not isinstance(layer, dict) or "weights" not in layer or "biases" not in layer:
            raise ModelFormatError(f"layers[{i}]: needs 'weights' and 'biases'")
        w = _matrix(layer["weights"], f"layers[{i}].weights")
        if not isinstance(layer["biases"], list):
            raise ModelFormatError(f"layers[{i}].biases: expected a list")
        b = [_number(v, f"layers[{i}].biases[{j}]") for j, v in enumerate(layer["biases"])]
        if len(w) != sizes[i + 1] or any(len(r) != sizes[i] for r in w):
            raise ShapeError(
                f"layers[{i}].weights: expected shape ({sizes[i + 1]}, {sizes[i]})"
            )
        if len(b) != sizes[i + 1]:
            raise ShapeError(f"layers[{i}].biases: expected length {sizes[i + 1]}")
        weights.append(np.array(w, dtype=float).reshape(sizes[i + 1], sizes[i]))
        biases.append(np.array(b, dtype=float))
    try:
        return FFNN(tuple(weights), tuple(biases), data["output_mode"])
    except ShapeError:
        raise
    except ValueError as exc:
        raise ModelFormatError(f"output_mode: {exc}") from exc


def dumps_model(model: FFNN) -> str:
    # json writes floats with repr(), the shortest string that round-trips exactly.
    return json.dumps(model_to_dict(model), indent=1) + "\n"


def loads_model(text: str) -> FFNN:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelFormatError("top level must be an object")
    return model_from_dict(data)


def save_model(model: FFNN, path) -> None:
    Path(path).write_text(dumps_model(model))


def load_model(path) -> FFNN:
    return loads_model(Path(path).read_text())


def example_network() -> FFNN:
    """Two-input, two-hidden, two-output toy net: y0 = relu(x0 - x1), y1 = relu(x1 - x0)."""
    return FFNN(
        weights=(np.array([[1.0, -1.0], [-1.0, 1.0]]), np.eye(2)),
        biases=(np.zeros(2), np.zeros(2)),
        output_mode="two-logit",
    )


def random_network(layer_sizes: Sequence[int], seed=None, output_mode=None, scale=1.0) -> FFNN:
    rng = np.random.default_rng(seed)
    if output_mode is None:
        n_out = layer_sizes[-1]
        output_mode = {1: "single-sigmoid", 2: "two-logit"}.get(n_out, "multiclass")
    weights = tuple(
        rng.normal(0.0, scale, size=(layer_sizes[i + 1], layer_sizes[i]))
        for i in range(len(layer_sizes) - 1)
    )
    biases = tuple(rng.normal(0.0, scale, size=n) for n in layer_sizes[1:])
    return FFNN(weights, biases, output_mode)
