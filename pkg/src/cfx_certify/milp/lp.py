"""Dense two-phase tableau simplex with a Bland's-rule fallback against cycling."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
# Consecutive degenerate pivots tolerated before switching to Bland's rule.
DEGENERATE_STREAK = 25

RELATIONS = ("<=", ">=", "==")


class SolverError(RuntimeError):
    """Numerical breakdown or iteration limit inside the simplex."""


@dataclass
class LinearProgram:
    """``sense`` c.x subject to A x (rel) b and lower <= x <= upper.

    Bounds may be infinite. ``relations`` holds one of ``"<="``, ``">="``,
    ``"=="`` per row of ``A``.
    """

    c: np.ndarray
    A: np.ndarray
    relations: tuple
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.relations = tuple(self.relations)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        m = self.A.shape[0]
        if self.b.shape[0] != m or len(self.relations) != m:
            raise ValueError(f"{m} constraint rows but {self.b.shape[0]} rhs and {len(self.relations)} relations")
        if any(r not in RELATIONS for r in self.relations):
            raise ValueError(f"relations must be among {RELATIONS}")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("objective and constraint coefficients must be finite")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not be NaN")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    def with_bounds(self, lower, upper) -> "LinearProgram":
        """Same program with new variable bounds; skips re-validating the unchanged rows."""
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.n_vars,)).copy()
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.n_vars,)).copy()
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValueError("bounds must not be NaN")
        out = copy.copy(self)
        out.lower, out.upper = lower, upper
        return out


@dataclass
class LPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    value: float = math.nan
    x: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class _Tableau:
    T: np.ndarray  # (m + 1, N + 1); last row is the reduced-cost row, last column the rhs
    basis: list
    iterations: int = 0
    bland: bool = field(default=False)


def _pivot(tab: _Tableau, r: int, j: int) -> None:
    T = tab.T
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    T[np.abs(T) < 1e-13] = 0.0
    rhs = T[:-1, -1]
    rhs[(rhs < 0) & (rhs > -1e-9)] = 0.0
    tab.basis[r] = j
    tab.iterations += 1


def _run(tab: _Tableau, allowed: np.ndarray, max_iter: int) -> str:
    """Minimise the cost row over the columns in ``allowed``; returns a status string."""
    T = tab.T
    m = T.shape[0] - 1
    streak = 0
    while True:
        if tab.iterations > max_iter:
            raise SolverError(f"simplex iteration limit {max_iter} exceeded")
        reduced = T[m, :-1]
        candidates = np.flatnonzero(allowed & (reduced < -OPT_TOL))
        if candidates.size == 0:
            return "optimal"
        if tab.bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmin(reduced[candidates])])
        column = T[:m, j]
        rows = np.flatnonzero(column > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12]
        # Smallest basic index leaves among ties (Bland's leaving rule).
        r = int(min(ties, key=lambda i: tab.basis[i]))
        if best <= 1e-12:
            streak += 1
            if streak > DEGENERATE_STREAK:
                tab.bland = True
        else:
            streak = 0
        _pivot(tab, r, j)
        if not np.all(np.isfinite(T[:, -1])):
            raise SolverError("non-finite values in the tableau")


def _standard_form(lp: LinearProgram):
    """Rewrite x = offset + D y with y >= 0; returns offset, D and extra bound rows."""
    n = lp.n_vars
    offset = np.zeros(n)
    cols = []  # (var index, sign)
    bound_rows = []  # (y index, cap)
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo > hi:
            return None
        if lo == hi:
            offset[j] = lo
        elif math.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if math.isfinite(hi):
                bound_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    D = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        D[j, k] = s
    return offset, D, bound_rows


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> LPResult:
    form = _standard_form(lp)
    if form is None:
        return LPResult("infeasible")
    offset, D, bound_rows = form
    c = lp.c if lp.sense == "min" else -lp.c
    ny = D.shape[1]

    A = lp.A @ D
    b = lp.b - lp.A @ offset
    rels = list(lp.relations)
    if bound_rows:
        extra = np.zeros((len(bound_rows), ny))
        for r, (k, cap) in enumerate(bound_rows):
            extra[r, k] = 1.0
        A = np.vstack([A, extra])
        b = np.concatenate([b, [cap for _, cap in bound_rows]])
        rels += ["<="] * len(bound_rows)

    # Rows with no y-dependence are checked directly and dropped.
    live_rows = np.any(A != 0, axis=1)
    keep = np.flatnonzero(live_rows)
    for i in np.flatnonzero(~live_rows):
        tol = FEAS_TOL * max(1.0, abs(b[i]))
        if (rels[i] == "<=" and b[i] < -tol) or (rels[i] == ">=" and b[i] > tol) or (
            rels[i] == "==" and abs(b[i]) > tol
        ):
            return LPResult("infeasible")
    A, b, rels = A[keep], b[keep], [rels[i] for i in keep]
    m = A.shape[0]

    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    rels = [{"<=": ">=", ">=": "<="}.get(r, r) if flip else r for r, flip in zip(rels, neg)]

    n_slack = sum(r != "==" for r in rels)
    n_art = sum(r != "<=" for r in rels)
    N = ny + n_slack + n_art
    T = np.zeros((m + 1, N + 1))
    T[:m, :ny] = A
    T[:m, -1] = b
    basis = [0] * m
    s = ny
    a = ny + n_slack
    art_cols = []
    for i, r in enumerate(rels):
        if r == "<=":
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        elif r == ">=":
            T[i, s] = -1.0
            s += 1
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
        else:
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1

    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    tab = _Tableau(T, basis)
    is_art = np.zeros(N, dtype=bool)
    is_art[art_cols] = True

    if art_cols:
        # Phase one: minimise the sum of artificials.
        art_rows = [i for i in range(m) if is_art[basis[i]]]
        T[m, :] = 0.0
        T[m, art_cols] = 1.0
        T[m] -= T[art_rows].sum(axis=0)
        _run(tab, np.ones(N, dtype=bool), max_iter)
        infeas = -T[m, -1]
        if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LPResult("infeasible", iterations=tab.iterations)
        for i in range(m):
            if not is_art[tab.basis[i]]:
                continue
            nz = np.flatnonzero((np.abs(T[i, :N]) > PIVOT_TOL) & ~is_art)
            if nz.size:
                _pivot(tab, i, int(nz[0]))
        # Rows still carried by an artificial are redundant.
        live = [i for i in range(m) if not is_art[tab.basis[i]]]
        if len(live) < m:
            T = np.vstack([T[live], T[m:]])
            tab.T = T
            tab.basis = [tab.basis[i] for i in live]
            m = len(live)

    # Phase two.
    cost = np.zeros(N)
    cost[:ny] = c @ D
    T[m, :-1] = cost
    T[m, -1] = 0.0
    cb = cost[tab.basis]
    T[m] -= cb @ T[:m]
    tab.bland = False
    status = _run(tab, ~is_art, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", iterations=tab.iterations)
    y = np.zeros(N)
    y[tab.basis] = T[:m, -1]
    x = offset + D @ y[:ny]
    value = float(lp.c @ x)
    return LPResult("optimal", value, x, tab.iterations)
