import math

import numpy as np
import pytest

from cfx_certify.milp import LinearProgram, MILPProblem, NodeLimitError, ProblemBuilder, solve_milp, to_lp_string
from cfx_certify.milp.bnb import _most_fractional
from oracles import brute_force_milp


def test_knapsack_matches_brute_force():
    b = ProblemBuilder()
    xs = [b.add_var(f"x{i}", binary=True) for i in range(3)]
    b.add_constraint({xs[0]: 3, xs[1]: 4, xs[2]: 5}, "<=", 8)
    b.set_objective({xs[0]: 4, xs[1]: 5, xs[2]: 7}, "max")
    p = b.build()
    res = solve_milp(p)
    assert res.value == pytest.approx(brute_force_milp(p)) == pytest.approx(11)
    assert res.x.tolist() == [1, 0, 1]


def test_fixed_binaries_solve_one_lp():
    b = ProblemBuilder()
    d = b.add_var("d", binary=True)
    y = b.add_var("y", 0, 10)
    b.add_constraint({d: 1}, "==", 1)
    b.add_constraint({y: 1, d: -3}, "<=", 0.5)
    b.set_objective({y: 1}, "max")
    res = solve_milp(b.build())
    assert res.value == pytest.approx(3.5)
    assert res.nodes == 1


def test_infeasible_root():
    b = ProblemBuilder()
    d = b.add_var("d", binary=True)
    b.add_constraint({d: 1}, ">=", 2)
    assert solve_milp(b.build()).status == "infeasible"


def test_integer_infeasible_after_branching():
    b = ProblemBuilder()
    d = [b.add_var(f"d{i}", binary=True) for i in range(2)]
    b.add_constraint({d[0]: 1, d[1]: 1}, "==", 1)
    b.add_constraint({d[0]: 1, d[1]: -1}, "==", 0)
    assert solve_milp(b.build()).status == "infeasible"


def test_node_limit_reports_bound():
    rng = np.random.default_rng(0)
    b = ProblemBuilder()
    ds = [b.add_var(f"d{i}", binary=True) for i in range(12)]
    w = rng.uniform(1, 10, 12)
    b.add_constraint(dict(zip(ds, w)), "<=", w.sum() / 2 + 0.37)
    b.set_objective(dict(zip(ds, w + rng.uniform(0, 0.1, 12))), "max")
    with pytest.raises(NodeLimitError) as err:
        solve_milp(b.build(), node_limit=3)
    assert err.value.bound is not None


def test_branching_prefers_most_fractional_then_earliest():
    x = np.array([0.5, 0.3, 0.5, 1.0])
    assert _most_fractional(x, (0, 1, 2, 3)) == 0
    assert _most_fractional(np.array([0.0, 1.0]), (0, 1)) is None


def test_bad_binary_index():
    lp = LinearProgram([1.0], np.zeros((0, 1)), (), [], 0.0, 1.0)
    with pytest.raises(ValueError):
        MILPProblem(lp, (3,))


@pytest.mark.parametrize("seed", range(40))
def test_random_milps_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    nb, nc, m = rng.integers(1, 7), rng.integers(0, 4), rng.integers(1, 5)
    b = ProblemBuilder()
    vs = [b.add_var(f"d{i}", binary=True) for i in range(nb)]
    vs += [b.add_var(f"x{i}", -3.0, 3.0) for i in range(nc)]
    for _ in range(m):
        row = {v: float(rng.integers(-4, 5)) for v in vs}
        b.add_constraint(row, str(rng.choice(["<=", ">="])), float(rng.integers(-3, 4)))
    b.set_objective({v: float(rng.normal()) for v in vs}, str(rng.choice(["min", "max"])))
    p = b.build()
    expected = brute_force_milp(p)
    res = solve_milp(p)
    if expected is None:
        assert res.status == "infeasible"
    else:
        assert res.status == "optimal"
        assert abs(res.value - expected) <= 1e-6
        assert all(res.x[j] in (0.0, 1.0) for j in p.binaries)


def test_lp_file_dump():
    b = ProblemBuilder()
    d = b.add_var("d", binary=True)
    x = b.add_var("x[0]", -math.inf, math.inf)
    y = b.add_var("y", 2.0, 2.0)
    b.add_constraint({x: 1.0, d: -2.5}, "<=", 1.0)
    b.add_constraint({x: 1.0, y: 1.0}, "==", 3.0)
    b.set_objective({x: -1.0}, "max")
    text = to_lp_string(b.build())
    assert text.splitlines()[0] == "Maximize"
    assert " c0: - 2.5 d + 1.0 x_0_ <= 1.0" in text
    assert " x_0_ free" in text and " y = 2.0" in text
    assert text.rstrip().endswith("Binary\n d\nEnd")
