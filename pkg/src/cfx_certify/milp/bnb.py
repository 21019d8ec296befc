"""Best-bound branch and bound over binary variables."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lp import LinearProgram, LPResult, SolverError, solve_lp

GAP_TOL = 1e-6
INT_TOL = 1e-6


class NodeLimitError(SolverError):
    """Branch and bound ran out of its node budget."""

    def __init__(self, message, incumbent=None, bound=None):
        super().__init__(message)
        self.incumbent = incumbent
        self.bound = bound


@dataclass
class MILPProblem:
    lp: LinearProgram
    binaries: tuple = ()
    names: list | None = None

    def __post_init__(self):
        self.binaries = tuple(int(i) for i in self.binaries)
        n = self.lp.n_vars
        if any(i < 0 or i >= n for i in self.binaries):
            raise ValueError("binary index out of range")
        if len(set(self.binaries)) != len(self.binaries):
            raise ValueError("duplicate binary index")

    def relaxation_bounds(self):
        lower = self.lp.lower.copy()
        upper = self.lp.upper.copy()
        idx = list(self.binaries)
        lower[idx] = np.maximum(lower[idx], 0.0)
        upper[idx] = np.minimum(upper[idx], 1.0)
        return lower, upper


@dataclass
class MILPResult:
    status: str  # "optimal", "infeasible" or "unbounded"
    value: float = math.nan
    x: np.ndarray | None = None
    nodes: int = 0
    lp_iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _most_fractional(x, binaries):
    best, best_frac = None, INT_TOL
    for i in binaries:
        frac = abs(x[i] - round(x[i]))
        # Strict ">" keeps the earliest binary on ties.
        if frac > best_frac:
            best, best_frac = i, frac
    return best


def solve_milp(problem: MILPProblem, node_limit: int = 200_000, gap: float = GAP_TOL) -> MILPResult:
    lp = problem.lp
    sign = 1.0 if lp.sense == "min" else -1.0
    lower, upper = problem.relaxation_bounds()
    counter = itertools.count()
    heap = [(-math.inf, next(counter), lower, upper)]
    incumbent_val = math.inf  # in minimisation terms
    incumbent_x = None
    nodes = 0
    iterations = 0
    while heap:
        bound, _, lo, hi = heapq.heappop(heap)
        if bound >= incumbent_val - gap:
            break
        if nodes >= node_limit:
            raise NodeLimitError(
                f"node limit {node_limit} reached",
                incumbent=None if incumbent_x is None else sign * incumbent_val,
                bound=sign * bound,
            )
        nodes += 1
        res: LPResult = solve_lp(lp.with_bounds(lo, hi))
        iterations += res.iterations
        if res.status == "infeasible":
            continue
        if res.status == "unbounded":
            if nodes == 1:
                return MILPResult("unbounded", nodes=nodes, lp_iterations=iterations)
            raise SolverError("unbounded relaxation below a bounded root")
        val = sign * res.value
        if val >= incumbent_val - gap:
            continue
        j = _most_fractional(res.x, problem.binaries)
        if j is None:
            x = res.x.copy()
            idx = list(problem.binaries)
            x[idx] = np.round(x[idx])
            incumbent_val, incumbent_x = val, x
            continue
        for v in (0.0, 1.0):
            clo, chi = lo.copy(), hi.copy()
            clo[j] = chi[j] = v
            heapq.heappush(heap, (val, next(counter), clo, chi))
    if incumbent_x is None:
        return MILPResult("infeasible", nodes=nodes, lp_iterations=iterations)
    return MILPResult("optimal", sign * incumbent_val, incumbent_x, nodes, iterations)


@dataclass
class ProblemBuilder:
    """Incremental construction of a MILP by named variables and sparse rows."""

    names: list = field(default_factory=list)
    lower: list = field(default_factory=list)
    upper: list = field(default_factory=list)
    binaries: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    relations: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    sense: str = "min"

    def add_var(self, name: str, lo=0.0, hi=math.inf, binary: bool = False) -> int:
        self.names.append(name)
        self.lower.append(lo)
        self.upper.append(hi)
        idx = len(self.names) - 1
        if binary:
            self.binaries.append(idx)
        return idx

    def add_constraint(self, coefs: dict, relation: str, rhs: float) -> int:
        self.rows.append(dict(coefs))
        self.relations.append(relation)
        self.rhs.append(float(rhs))
        return len(self.rows) - 1

    def set_objective(self, coefs: dict, sense: str = "min") -> None:
        self.objective = dict(coefs)
        self.sense = sense

    def build(self) -> MILPProblem:
        n = len(self.names)
        c = np.zeros(n)
        for j, v in self.objective.items():
            c[j] += v
        A = np.zeros((len(self.rows), n))
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                A[i, j] += v
        lp = LinearProgram(c, A, tuple(self.relations), np.array(self.rhs), np.array(self.lower, dtype=float),
                           np.array(self.upper, dtype=float), self.sense)
        return MILPProblem(lp, tuple(self.binaries), list(self.names))
