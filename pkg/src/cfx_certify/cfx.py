"""Counterfactual generation by MILP, the robust generation loop and the robustness filter."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import FeatureSpec
from .interval import INN, PlausibleShiftSet, build_abstraction, inn_classify
from .milp import ProblemBuilder, encode_network, solve_milp
from .network import FFNN, check_input, classify

log = logging.getLogger(__name__)

# Smallest slack demanded on the class-flip constraint, so that solutions on the
# decision boundary still classify as the target under the tie-breaking rules.
MIN_MARGIN = 1e-5


@dataclass
class CfxQuery:
    """A counterfactual request for input ``x`` of a model.

    ``lower``/``upper`` bound the counterfactual box (default [0, 1]);
    ``frozen`` lists encoded column indices that must keep their value.
    """

    model: FFNN
    x: np.ndarray
    c: int | None = None
    spec: FeatureSpec | None = None
    target: int | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    frozen: tuple = ()

    def __post_init__(self):
        self.x = check_input(self.model, self.x).copy()
        actual = classify(self.model, self.x)
        if self.c is None:
            self.c = actual
        elif self.c != actual:
            raise ValueError(f"model classifies x as {actual}, not {self.c}")
        if self.target is None:
            if self.model.n_classes != 2:
                raise ValueError("multiclass queries need an explicit target class")
            self.target = 1 - self.c
        if self.target == self.c or not 0 <= self.target < self.model.n_classes:
            raise ValueError(f"invalid target class {self.target}")
        n = self.model.n_inputs
        self.lower = np.zeros(n) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        self.upper = np.ones(n) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("empty counterfactual box")
        if self.spec is not None and self.spec.n_encoded != n:
            raise ValueError(f"feature spec encodes {self.spec.n_encoded} columns, model takes {n}")
        self.frozen = tuple(sorted(set(int(i) for i in self.frozen)))


@dataclass
class CfxResult:
    x_prime: np.ndarray | None
    distance: float = math.nan
    epsilon: float = 0.0
    iterations: int = 0
    robust: str = "not-checked"  # "yes", "no" or "not-checked"
    reason: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.x_prime is not None

    def to_dict(self) -> dict:
        d = {
            "x_prime": None if self.x_prime is None else [float(v) for v in self.x_prime],
            "distance": None if not math.isfinite(self.distance) else float(self.distance),
            "epsilon": float(self.epsilon),
            "iterations": int(self.iterations),
            "robust": self.robust,
            "reason": self.reason,
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CfxResult":
        known = {"x_prime", "distance", "epsilon", "iterations", "robust", "reason"}
        xp = d.get("x_prime")
        return cls(
            x_prime=None if xp is None else np.asarray(xp, dtype=float),
            distance=math.nan if d.get("distance") is None else float(d["distance"]),
            epsilon=float(d.get("epsilon", 0.0)),
            iterations=int(d.get("iterations", 0)),
            robust=d.get("robust", "not-checked"),
            reason=d.get("reason", ""),
            extra={k: v for k, v in d.items() if k not in known},
        )


def normalized_l1(x, x_prime) -> float:
    return float(np.mean(np.abs(np.asarray(x, float) - np.asarray(x_prime, float))))


def _column_kinds(q: CfxQuery):
    """Per encoded column: 'continuous' or 'binary'; plus one-hot groups and ordinal blocks."""
    n = q.model.n_inputs
    kinds = ["continuous"] * n
    onehot, ordinal = [], []
    if q.spec is not None:
        for f, s in q.spec.slices():
            cols = list(range(s.start, s.stop))
            if f.kind == "continuous":
                continue
            for j in cols:
                kinds[j] = "binary"
            (onehot if f.kind == "discrete" else ordinal).append(cols)
    return kinds, onehot, ordinal


def build_cfx_problem(q: CfxQuery, margin: float):
    """MILP minimising the normalised L1 distance subject to the class flip."""
    model = q.model
    n = model.n_inputs
    b = ProblemBuilder()
    kinds, onehot, ordinal = _column_kinds(q)
    frozen = set(q.frozen)
    lower, upper = q.lower.copy(), q.upper.copy()
    xs = []
    for j in range(n):
        lo, hi = (q.x[j], q.x[j]) if j in frozen else (lower[j], upper[j])
        if kinds[j] == "binary":
            lo, hi = max(lo, 0.0), min(hi, 1.0)
        lower[j], upper[j] = lo, hi
        xs.append(b.add_var(f"xp_{j}", lo, hi, binary=kinds[j] == "binary"))
    ts = []
    for j in range(n):
        t = b.add_var(f"t_{j}", 0.0, math.inf)
        b.add_constraint({t: 1.0, xs[j]: -1.0}, ">=", -q.x[j])
        b.add_constraint({t: 1.0, xs[j]: 1.0}, ">=", q.x[j])
        ts.append(t)
    for group in onehot:
        b.add_constraint({xs[j]: 1.0 for j in group}, "==", 1.0)
    for block in ordinal:
        for a, c in zip(block[:-1], block[1:]):
            b.add_constraint({xs[a]: 1.0, xs[c]: -1.0}, ">=", 0.0)
    enc = encode_network(b, INN.from_point(model), xs, lower, upper, fix_stable=True)
    ys = enc.output_vars
    t = q.target
    if model.output_mode == "single-sigmoid":
        if t == 1:
            b.add_constraint({ys[0]: 1.0}, ">=", margin)
        else:
            b.add_constraint({ys[0]: 1.0}, "<=", -margin)
    else:
        for o in range(len(ys)):
            if o != t:
                b.add_constraint({ys[t]: 1.0, ys[o]: -1.0}, ">=", margin)
    b.set_objective({tj: 1.0 / n for tj in ts}, "min")
    return b.build(), xs, kinds


def generate_cfx(q: CfxQuery, epsilon: float = 0.0) -> CfxResult:
    """Closest counterfactual whose deciding output clears the target by ``epsilon``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    margin = max(epsilon, MIN_MARGIN)
    for _ in range(3):
        problem, xs, kinds = build_cfx_problem(q, margin)
        res = solve_milp(problem)
        if not res.optimal:
            return CfxResult(None, epsilon=epsilon, reason=f"no counterfactual with margin {epsilon:g}")
        xp = np.array([res.x[j] for j in xs])
        binary = np.array([k == "binary" for k in kinds])
        xp[binary] = np.round(xp[binary])
        xp = np.clip(xp, q.lower, q.upper)
        for j in q.frozen:
            xp[j] = q.x[j]
        if classify(q.model, xp) == q.target:
            return CfxResult(xp, normalized_l1(q.x, xp), epsilon, reason="found")
        # Round-off left the point on the wrong side of the boundary.
        margin *= 10
        log.debug("counterfactual failed validity re-check, raising margin to %g", margin)
    return CfxResult(None, epsilon=epsilon, reason="numerical failure: solution not valid on the model")


def epsilon_schedule(eps_step: float, eps_max: float, max_iter: int | None = None):
    if eps_step <= 0:
        raise ValueError("eps_step must be positive")
    count = int(math.floor(eps_max / eps_step + 1e-9)) + 1
    if max_iter is not None:
        count = min(count, max_iter)
    return [round(i * eps_step, 12) for i in range(count)]


def generate_robust_cfx(
    q: CfxQuery,
    shifts: PlausibleShiftSet,
    max_iter: int | None = None,
    eps_step: float = 0.2,
    eps_max: float = 20.0,
    method: str = "interval",
) -> CfxResult:
    """Raise the margin until the counterfactual is decided as the target by the abstraction.

    The search is incomplete: an absent result only means nothing robust was
    found within the iteration and margin budget.
    """
    if max_iter is not None and max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    inn = build_abstraction(q.model, shifts)
    if inn_classify(inn, q.x, method) != q.c:
        return CfxResult(None, robust="no", reason="unsound: shift set changes the class of x")
    last = None
    schedule = epsilon_schedule(eps_step, eps_max, max_iter)
    for it, eps in enumerate(schedule, start=1):
        res = generate_cfx(q, eps)
        res.iterations = it
        if not res.found:
            res.robust = "no"
            res.reason = f"no robust counterfactual: none exists at margin {eps:g}"
            return res
        if inn_classify(inn, res.x_prime, method) == q.target:
            res.robust = "yes"
            res.reason = "robust"
            return res
        last = res
    return CfxResult(
        None,
        epsilon=schedule[-1],
        iterations=len(schedule),
        robust="no",
        reason="no robust counterfactual within the iteration budget",
        extra={} if last is None else {"last_candidate": [float(v) for v in last.x_prime]},
    )


def filter_robust(model: FFNN, shifts: PlausibleShiftSet, x, c: int, candidates, target: int | None = None,
                  method: str = "interval") -> list:
    """Candidates decided as the counterfactual class by the abstraction, in input order."""
    if target is None:
        target = 1 - c
    inn = build_abstraction(model, shifts)
    out = []
    for cand in candidates:
        cand = np.asarray(cand, dtype=float)
        if cand.shape != (model.n_inputs,):
            raise ValueError(f"candidate has shape {cand.shape}, expected ({model.n_inputs},)")
        if inn_classify(inn, cand, method) == target:
            out.append(cand)
    return out
