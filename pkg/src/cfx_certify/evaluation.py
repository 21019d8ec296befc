"""Soundness and robustness verdicts, validity sweeps, delta estimation, LOF and reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from sklearn.neighbors import LocalOutlierFactor

from .data import Dataset
from .interval import PlausibleShiftSet, build_abstraction, inn_classify, p_distance
from .network import FFNN, classify
from .training import TrainConfig, retrain_incremental


class UnsoundShiftError(ValueError):
    """The shift set can change the class of the original input, so robustness is vacuous."""


class DeltaEstimateError(RuntimeError):
    def __init__(self, message, samples=None):
        super().__init__(message)
        self.samples = samples or []


def _shifts(shifts) -> PlausibleShiftSet:
    return shifts if isinstance(shifts, PlausibleShiftSet) else PlausibleShiftSet(float(shifts))


def is_sound(model: FFNN, shifts, x, method: str = "interval") -> bool:
    inn = build_abstraction(model, _shifts(shifts))
    return inn_classify(inn, x, method) == classify(model, x)


def is_delta_robust(model: FFNN, shifts, x, c: int, x_prime, target: int | None = None,
                    method: str = "interval") -> bool:
    """True iff the abstraction decides ``x_prime`` as the counterfactual class."""
    inn = build_abstraction(model, _shifts(shifts))
    if inn_classify(inn, x, method) != c:
        raise UnsoundShiftError("shift set is not sound at x")
    if target is None:
        target = 1 - c
    return inn_classify(inn, x_prime, method) == target


@dataclass
class DeltaValidity:
    fraction: float
    robust: int
    sound: int
    unsound: int


def _case(case):
    x, c, xp = case[0], case[1], case[2]
    target = case[3] if len(case) > 3 else 1 - c
    return np.asarray(x, float), int(c), None if xp is None else np.asarray(xp, float), target


def delta_validity(model: FFNN, cases: Sequence, shifts, method: str = "interval") -> DeltaValidity:
    """Share of sound cases whose counterfactual is robust.

    ``cases`` holds ``(x, c, x_prime)`` tuples; a missing counterfactual counts
    as not robust. Cases where the shift set is unsound at ``x`` are left out
    of the denominator and reported in ``unsound``.
    """
    inn = build_abstraction(model, _shifts(shifts))
    robust = sound = unsound = 0
    for case in cases:
        x, c, xp, target = _case(case)
        if inn_classify(inn, x, method) != c:
            unsound += 1
            continue
        sound += 1
        if xp is not None and inn_classify(inn, xp, method) == target:
            robust += 1
    fraction = robust / sound if sound else math.nan
    return DeltaValidity(fraction, robust, sound, unsound)


def validity_curve(model: FFNN, cases: Sequence, deltas: Sequence[float], shift_biases: bool = True,
                   method: str = "interval") -> list[tuple[float, float]]:
    """Delta-validity over an increasing grid, on the cases that are sound at the largest delta.

    Fixing the case set keeps the curve non-increasing: a larger box only
    loses decided verdicts.
    """
    deltas = [float(d) for d in deltas]
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta grid must be strictly increasing")
    if not deltas:
        return []
    top = PlausibleShiftSet(deltas[-1], shift_biases=shift_biases)
    inn = build_abstraction(model, top)
    kept = [case for case in cases if inn_classify(inn, _case(case)[0], method) == _case(case)[1]]
    curve = []
    for d in deltas:
        res = delta_validity(model, kept, PlausibleShiftSet(d, shift_biases=shift_biases), method)
        curve.append((d, res.fraction))
    return curve


# -- delta estimation ------------------------------------------------------------

@dataclass
class DeltaEstimate:
    delta_max: float
    samples: list  # (fraction in percent, delta_a)
    sound_instance_count: int
    sound_counts: list = field(default_factory=list)
    min_sound: int = 0

    def to_dict(self) -> dict:
        return {
            "delta_max": self.delta_max,
            "samples": [[a, d] for a, d in self.samples],
            "sound_instance_count": self.sound_instance_count,
            "sound_counts": list(self.sound_counts),
            "min_sound": self.min_sound,
        }


def effective_min_sound(min_sound: int, n_test: int) -> int:
    """Cap the soundness threshold at half the test set for small datasets."""
    return max(1, min(min_sound, math.ceil(n_test / 2)))


def shift_magnitudes(base: FFNN, d2: Dataset, cfg: TrainConfig, fraction: float, repeats: int = 5,
                     p: float = math.inf, seed: int = 0) -> float:
    """Largest p-distance from ``base`` over ``repeats`` retrainings on random ``fraction``% of d2."""
    n_pick = max(1, int(round(len(d2) * fraction / 100.0)))
    n_pick = min(n_pick, len(d2))
    best = 0.0
    for r in range(repeats):
        rng = np.random.default_rng([seed, int(round(fraction * 1000)), r])
        idx = rng.choice(len(d2), size=n_pick, replace=False)
        run_cfg = TrainConfig(cfg.hidden_size, cfg.learning_rate, cfg.batch_size, cfg.epochs,
                              int(rng.integers(2**31)), cfg.loss)
        shifted = retrain_incremental(base, d2.subset(idx), run_cfg)
        best = max(best, p_distance(base, shifted, p))
    return best


def estimate_delta_max(
    base: FFNN,
    d2: Dataset,
    cfg: TrainConfig,
    fractions: Sequence[float],
    test_X,
    repeats: int = 5,
    min_sound: int = 50,
    p: float = math.inf,
    seed: int = 0,
    method: str = "interval",
) -> DeltaEstimate:
    """Walk the retraining-fraction grid upward; delta_max is the last delta_a that stays sound.

    delta_a is computed for every fraction so the whole (fraction, delta_a)
    curve is reported, but the walk stops at the first fraction whose shift
    set is sound for fewer than ``min_sound`` test inputs.
    """
    if len(d2) == 0:
        raise ValueError("retraining set is empty")
    test_X = np.asarray(test_X, dtype=float)
    need = effective_min_sound(min_sound, len(test_X))
    samples, counts = [], []
    delta_max, sound_count, walking = None, 0, True
    for a in sorted(float(f) for f in fractions):
        d_a = shift_magnitudes(base, d2, cfg, a, repeats, p, seed)
        samples.append((a, d_a))
        if d_a > 0:
            shifts = PlausibleShiftSet(d_a, p)
            n_sound = sum(is_sound(base, shifts, x, method) for x in test_X)
        else:
            n_sound = 0
        counts.append(n_sound)
        if walking:
            if d_a > 0 and n_sound >= need:
                delta_max, sound_count = d_a, n_sound
            else:
                walking = False
    if delta_max is None:
        raise DeltaEstimateError(
            f"no retraining fraction gives a positive delta sound for {need} test instances", samples
        )
    return DeltaEstimate(delta_max, samples, sound_count, counts, need)


# -- local outlier factor ------------------------------------------------------------

def lof_score(reference, points, k: int = 20):
    """LOF of each point w.r.t. the reference rows; returns (scores, labels).

    ``scores`` are negated outlier factors (about -1 for inliers); the label is
    -1 when the score falls below -1.5 and +1 otherwise.
    """
    reference = np.asarray(reference, dtype=float)
    points = np.asarray(points, dtype=float).reshape(-1, reference.shape[1])
    if reference.shape[0] < k + 1:
        raise ValueError(f"need at least {k + 1} reference rows for k={k}")
    lof = LocalOutlierFactor(n_neighbors=k, novelty=True).fit(reference)
    scores = lof.score_samples(points)
    labels = np.where(scores < lof.offset_, -1, 1)
    return scores, labels


# -- reports ------------------------------------------------------------

@dataclass
class EvalReport:
    vm1: float | None
    vm2: float | None
    mean_l1: float | None
    mean_lof_label: float | None
    delta_validity_curve: list
    n_cases: int = 0
    n_found: int = 0
    empty: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delta_validity_curve"] = [[a, None if b is None or math.isnan(b) else b]
                                     for a, b in self.delta_validity_curve]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def curve_csv(self) -> str:
        return curve_to_csv(self.delta_validity_curve, ("delta", "validity"))


def curve_to_csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for a, b in rows:
        w.writerow([repr(float(a)), "" if b is None or (isinstance(b, float) and math.isnan(b)) else repr(float(b))])
    return buf.getvalue()


def evaluate(model_before: FFNN, model_after: FFNN, cases: Sequence, shifts=None, reference=None,
             k: int = 20, deltas: Sequence[float] | None = None, method: str = "interval") -> EvalReport:
    """Validity before/after retraining, mean normalised L1, mean LOF label and a validity curve.

    ``cases`` are ``(x, c, x_prime)`` tuples; only found counterfactuals enter
    the metrics. With none found every metric is ``None`` and ``empty`` is set.
    """
    found = [_case(c) for c in cases if c[2] is not None]
    if not found:
        return EvalReport(None, None, None, None, [], len(cases), 0, True)
    vm1 = float(np.mean([classify(model_before, xp) == t for _, _, xp, t in found]))
    vm2 = float(np.mean([classify(model_after, xp) == t for _, _, xp, t in found]))
    l1 = float(np.mean([np.mean(np.abs(x - xp)) for x, _, xp, _ in found]))
    lof = None
    if reference is not None:
        _, labels = lof_score(reference, np.array([xp for _, _, xp, _ in found]), k)
        lof = float(np.mean(labels))
    curve = []
    if deltas is None and shifts is not None:
        deltas = [_shifts(shifts).delta]
    if deltas:
        biases = _shifts(shifts).shift_biases if shifts is not None else True
        curve = validity_curve(model_before, cases, deltas, biases, method)
    return EvalReport(vm1, vm2, l1, lof, curve, len(cases), len(found), False)
