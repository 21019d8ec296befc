"""Interval arithmetic, interval neural networks and the ±delta abstraction of a network."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import FFNN, ModelFormatError, ShapeError

# Verdict returned by inn_classify when no class is decided.
UNDECIDED = None


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, v: float) -> "Interval":
        return cls(float(v), float(v))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, v) -> bool:
        return self.lo <= v <= self.hi

    def contains(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def __add__(self, other):
        other = _as_interval(other)
        return Interval(self.lo + other.lo, self.hi + other.hi)

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        return self + (-_as_interval(other))

    def __mul__(self, other):
        other = _as_interval(other)
        p = (self.lo * other.lo, self.lo * other.hi, self.hi * other.lo, self.hi * other.hi)
        return Interval(min(p), max(p))

    __rmul__ = __mul__

    def relu(self) -> "Interval":
        return Interval(max(self.lo, 0.0), max(self.hi, 0.0))

    def __iter__(self):
        yield self.lo
        yield self.hi

    def __repr__(self):
        return f"[{self.lo:.6g}, {self.hi:.6g}]"


def _as_interval(v) -> Interval:
    return v if isinstance(v, Interval) else Interval.point(v)


@dataclass(frozen=True)
class PlausibleShiftSet:
    """All shifted models within p-distance ``delta`` of a base model.

    With ``shift_biases=False`` only weights move and biases stay fixed.
    """

    delta: float
    p: float = math.inf
    shift_biases: bool = True

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be a positive finite number, got {self.delta}")
        if not self.p >= 0:
            raise ValueError(f"p must lie in [0, inf], got {self.p}")


def p_distance(a: FFNN, b: FFNN, p: float = math.inf, include_biases: bool = True) -> float:
    """p-norm of the elementwise difference of all weights (and biases).

    ``p = 0`` counts the parameters that differ.
    """
    if not a.same_topology(b):
        raise ShapeError(f"topology mismatch: {a.layer_sizes} vs {b.layer_sizes}")
    if include_biases:
        diff = np.abs(a.flat_parameters() - b.flat_parameters())
    else:
        diff = np.concatenate([np.abs(wa - wb).ravel() for wa, wb in zip(a.weights, b.weights)])
    if p == math.inf:
        return float(diff.max())
    if p == 0:
        return float(np.count_nonzero(diff))
    return float(np.sum(diff ** p) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class INN:
    """Network whose weights and biases are closed intervals, stored as lo/hi arrays."""

    weights_lo: tuple
    weights_hi: tuple
    biases_lo: tuple
    biases_hi: tuple
    output_mode: str = "two-logit"

    def __post_init__(self):
        arrays = {}
        for name in ("weights_lo", "weights_hi", "biases_lo", "biases_hi"):
            arrs = []
            for a in getattr(self, name):
                a = np.array(a, dtype=float)
                a.setflags(write=False)
                arrs.append(a)
            arrays[name] = tuple(arrs)
        # Reuse the network validator for shapes and finiteness.
        FFNN(arrays["weights_lo"], arrays["biases_lo"], self.output_mode)
        FFNN(arrays["weights_hi"], arrays["biases_hi"], self.output_mode)
        for lo, hi in zip(arrays["weights_lo"] + arrays["biases_lo"], arrays["weights_hi"] + arrays["biases_hi"]):
            if lo.shape != hi.shape:
                raise ShapeError("lower and upper parameter arrays differ in shape")
            if np.any(lo > hi):
                raise ValueError("interval parameter with lo > hi")
        for name, value in arrays.items():
            object.__setattr__(self, name, value)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights_lo[0].shape[1]] + [w.shape[0] for w in self.weights_lo]

    @property
    def n_inputs(self) -> int:
        return self.weights_lo[0].shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.weights_lo)

    def weight(self, layer: int, j: int, l: int) -> Interval:
        return Interval(self.weights_lo[layer][j, l], self.weights_hi[layer][j, l])

    def bias(self, layer: int, j: int) -> Interval:
        return Interval(self.biases_lo[layer][j], self.biases_hi[layer][j])

    @classmethod
    def from_point(cls, model: FFNN) -> "INN":
        return cls(model.weights, model.weights, model.biases, model.biases, model.output_mode)

    def __repr__(self):
        return f"INN(layer_sizes={self.layer_sizes}, output_mode={self.output_mode!r})"


def _as_shifts(shifts) -> PlausibleShiftSet:
    return shifts if isinstance(shifts, PlausibleShiftSet) else PlausibleShiftSet(float(shifts))


def build_abstraction(model: FFNN, shifts: PlausibleShiftSet | float) -> INN:
    """Widen every weight (and unless disabled, every bias) of ``model`` by ±delta.

    Exact for p = inf; for finite p the box over-approximates the shift set.
    """
    shifts = _as_shifts(shifts)
    delta = shifts.delta
    bd = delta if shifts.shift_biases else 0.0
    return INN(
        tuple(w - delta for w in model.weights),
        tuple(w + delta for w in model.weights),
        tuple(b - bd for b in model.biases),
        tuple(b + bd for b in model.biases),
        model.output_mode,
    )


def interval_affine(w_lo, w_hi, b_lo, b_hi, v_lo, v_hi):
    """Bounds of W v + b over all W in [w_lo, w_hi], b in [b_lo, b_hi], v in [v_lo, v_hi]."""
    products = np.stack([w_lo * v_lo, w_lo * v_hi, w_hi * v_lo, w_hi * v_hi])
    return products.min(axis=0).sum(axis=1) + b_lo, products.max(axis=0).sum(axis=1) + b_hi


def propagate(inn: INN, v_lo, v_hi):
    """Interval propagation from an input box; returns per-layer (pre-activation lo, hi)."""
    layers = []
    n = inn.n_layers
    for i in range(n):
        lo, hi = interval_affine(
            inn.weights_lo[i], inn.weights_hi[i], inn.biases_lo[i], inn.biases_hi[i], v_lo, v_hi
        )
        layers.append((lo, hi))
        if i < n - 1:
            v_lo, v_hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
    return layers


def inn_forward_bounds(inn: INN, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != inn.n_inputs:
        raise ShapeError(f"expected input of length {inn.n_inputs}, got shape {x.shape}")
    return propagate(inn, x, x)[-1]


def inn_forward(inn: INN, x) -> list[Interval]:
    lo, hi = inn_forward_bounds(inn, x)
    return [Interval(float(a), float(b)) for a, b in zip(lo, hi)]


def decide_bounds(output_mode: str, lo, hi):
    """Class decided by output bounds, or UNDECIDED when intervals overlap."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if output_mode == "single-sigmoid":
        if lo[0] > 0.0:
            return 1
        if hi[0] < 0.0:
            return 0
        return UNDECIDED
    for c in range(lo.shape[0]):
        others = np.delete(hi, c)
        if np.all(lo[c] > others):
            return c
    return UNDECIDED


def inn_classify(inn: INN, x, method: str = "interval"):
    """Class ``c`` if its lower output bound beats every other upper bound, else UNDECIDED.

    ``method="milp"`` falls back to exact output ranges of the big-M encoding
    when interval propagation leaves the verdict open. The MILP ranges lie
    inside the propagated intervals, so a decided interval verdict is final.
    """
    if method not in ("interval", "milp"):
        raise ValueError(f"unknown bounds method {method!r}")
    lo, hi = inn_forward_bounds(inn, x)
    verdict = decide_bounds(inn.output_mode, lo, hi)
    if verdict is UNDECIDED and method == "milp":
        from .milp.encoding import milp_verdict

        verdict = milp_verdict(inn, x)
    return verdict


def sample_shift(model: FFNN, shifts: PlausibleShiftSet | float, seed=None) -> FFNN:
    """Perturb each parameter independently and uniformly within ±delta (p = inf only)."""
    shifts = _as_shifts(shifts)
    if shifts.p != math.inf:
        raise ValueError("shift sampling is only supported for p = inf")
    delta = shifts.delta
    rng = np.random.default_rng(seed)
    weights = [w + rng.uniform(-delta, delta, size=w.shape) for w in model.weights]
    if shifts.shift_biases:
        biases = [b + rng.uniform(-delta, delta, size=b.shape) for b in model.biases]
    else:
        biases = list(model.biases)
    return model.with_parameters(weights, biases)


def sample_inside(inn: INN, rng) -> FFNN:
    """A concrete network with every parameter drawn uniformly from its interval."""
    weights = [rng.uniform(lo, hi) for lo, hi in zip(inn.weights_lo, inn.weights_hi)]
    biases = [rng.uniform(lo, hi) for lo, hi in zip(inn.biases_lo, inn.biases_hi)]
    return FFNN(tuple(weights), tuple(biases), inn.output_mode)


# -- serialization -----------------------------------------------------------

def inn_to_dict(inn: INN) -> dict:
    layers = []
    for i in range(inn.n_layers):
        w = np.stack([inn.weights_lo[i], inn.weights_hi[i]], axis=-1)
        b = np.stack([inn.biases_lo[i], inn.biases_hi[i]], axis=-1)
        layers.append({"weights": w.tolist(), "biases": b.tolist()})
    return {"layer_sizes": inn.layer_sizes, "output_mode": inn.output_mode, "layers": layers}


def inn_from_dict(data: dict) -> INN:
    for key in ("layer_sizes", "output_mode", "layers"):
        if key not in data:
            raise ModelFormatError(f"missing field {key!r}")
    sizes = data["layer_sizes"]
    wl, wh, bl, bh = [], [], [], []
    if len(data["layers"]) != len(sizes) - 1:
        raise ModelFormatError(f"layers: expected {len(sizes) - 1} layers")
    for i, layer in enumerate(data["layers"]):
        try:
            w = np.array(layer["weights"], dtype=float)
            b = np.array(layer["biases"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"layers[{i}]: {exc}") from exc
        if w.shape != (sizes[i + 1], sizes[i], 2) or b.shape != (sizes[i + 1], 2):
            raise ShapeError(f"layers[{i}]: interval arrays have the wrong shape")
        wl.append(w[..., 0])
        wh.append(w[..., 1])
        bl.append(b[:, 0])
        bh.append(b[:, 1])
    return INN(tuple(wl), tuple(wh), tuple(bl), tuple(bh), data["output_mode"])


def save_inn(inn: INN, path) -> None:
    Path(path).write_text(json.dumps(inn_to_dict(inn), indent=1) + "\n")


def load_inn(path) -> INN:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON: {exc}") from exc
    return inn_from_dict(data)
