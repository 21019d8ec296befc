import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfx_certify.cfx import (MIN_MARGIN, CfxQuery, CfxResult, epsilon_schedule, filter_robust, generate_cfx,
                             generate_robust_cfx)
from cfx_certify.data import make_synthetic
from cfx_certify.interval import PlausibleShiftSet, build_abstraction, inn_classify
from cfx_certify.network import FFNN, classify, forward, random_network
from oracles import grid_cfx_distance


def example_query(net, **kw):
    return CfxQuery(net, [1.0, 2.0], lower=0.0, upper=5.0, **kw)


def test_example_closest_counterfactual(example_net):
    res = generate_cfx(example_query(example_net), 0.0)
    y = forward(example_net, res.x_prime)
    assert res.found and classify(example_net, res.x_prime) == 0
    assert y[0] >= y[1]
    # closing the gap x1 - x0 = 1 costs at least 1 in summed L1, i.e. 0.5 after averaging over 2 features
    assert res.distance == pytest.approx(0.5, abs=1e-4)


def test_distance_grows_with_margin(example_net):
    q = example_query(example_net)
    d = [generate_cfx(q, e).distance for e in (0.0, 0.5, 1.0)]
    assert d[0] <= d[1] <= d[2]
    assert d[1] == pytest.approx(0.75, abs=1e-6) and d[2] == pytest.approx(1.0, abs=1e-6)


def test_one_dimensional_boundary():
    net = FFNN((np.array([[1.0]]), np.array([[1.0]])), (np.array([0.0]), np.array([-0.5])), "single-sigmoid")
    res = generate_cfx(CfxQuery(net, [0.2]), 0.0)
    # the boundary point 0.5 itself is class 0 under the strict rule, so the margin floor moves it just past
    assert res.x_prime[0] == pytest.approx(0.5, abs=1e-3)
    assert res.distance == pytest.approx(0.3, abs=1e-3)
    assert res.x_prime[0] - 0.5 >= MIN_MARGIN - 1e-9
    assert classify(net, res.x_prime) == 1


def test_no_counterfactual_in_box():
    net = FFNN((np.array([[1.0]]), np.array([[1.0]])), (np.array([0.0]), np.array([-5.0])), "single-sigmoid")
    res = generate_cfx(CfxQuery(net, [0.2]), 0.0)
    assert not res.found and "no counterfactual" in res.reason


def test_query_validation(example_net):
    with pytest.raises(ValueError):
        CfxQuery(example_net, [1.0, 2.0], c=0)
    with pytest.raises(ValueError):
        CfxQuery(random_network([2, 3, 3], seed=0), [0.1, 0.2])
    with pytest.raises(ValueError):
        generate_cfx(example_query(example_net), -1.0)


def test_robust_example_loop(example_net, example_shifts):
    q = example_query(example_net)
    res = generate_robust_cfx(q, example_shifts)
    assert res.robust == "yes" and res.iterations > 1
    inn = build_abstraction(example_net, example_shifts)
    assert inn_classify(inn, res.x_prime) == 0
    assert classify(example_net, res.x_prime) == 0


def test_robust_unsound_is_distinct(example_net):
    res = generate_robust_cfx(example_query(example_net), PlausibleShiftSet(5.0))
    assert not res.found and res.reason.startswith("unsound") and res.iterations == 0


def test_robust_single_iteration_budget(example_net, example_shifts):
    res = generate_robust_cfx(example_query(example_net), example_shifts, max_iter=1)
    assert not res.found and res.iterations == 1
    assert "budget" in res.reason and "last_candidate" in res.extra
    with pytest.raises(ValueError):
        generate_robust_cfx(example_query(example_net), example_shifts, max_iter=0)


def test_epsilon_schedule():
    s = epsilon_schedule(0.2, 20.0)
    assert len(s) == 101 and s[0] == 0.0 and s[3] == 0.6 and s[-1] == 20.0
    assert epsilon_schedule(0.2, 20.0, max_iter=4) == [0.0, 0.2, 0.4, 0.6]


def test_filter_examples(example_net, example_shifts):
    cands = [np.array([2.1, 2.0]), np.array([2.6, 2.0])]
    out = filter_robust(example_net, example_shifts, [1, 2], 1, cands)
    assert len(out) == 1 and out[0].tolist() == [2.6, 2.0]
    assert filter_robust(example_net, example_shifts, [1, 2], 1, []) == []


def test_filter_point_limit(rng):
    net = random_network([3, 5, 2], seed=3)
    x = rng.uniform(0, 1, 3)
    c = classify(net, x)
    cands = list(rng.uniform(0, 1, (40, 3)))
    kept = filter_robust(net, PlausibleShiftSet(1e-9), x, c, cands)
    valid = [p for p in cands if classify(net, p) == 1 - c]
    assert [p.tolist() for p in kept] == [p.tolist() for p in valid]
    with pytest.raises(ValueError):
        filter_robust(net, PlausibleShiftSet(0.1), x, c, [np.zeros(2)])


@pytest.fixture(scope="module")
def mixed_setup():
    _, spec = make_synthetic(10)
    spec = replace(spec, features=tuple(replace(f, min=0.0, max=1.0) if f.kind == "continuous" else f
                                        for f in spec.features))
    net = random_network([spec.n_encoded, 6, 2], seed=21, scale=1.5)
    return spec, net


def _random_row(spec, rng):
    parts = []
    for f, _ in spec.slices():
        if f.kind == "continuous":
            parts.append([rng.uniform()])
        elif f.kind == "ordinal":
            level = rng.integers(0, f.k + 1)
            parts.append([1.0] * level + [0.0] * (f.k - level))
        else:
            v = np.zeros(len(f.categories))
            v[rng.integers(len(f.categories))] = 1
            parts.append(list(v))
    return np.concatenate(parts)


@pytest.mark.parametrize("seed", range(8))
def test_plausibility_constraints(mixed_setup, seed):
    spec, net = mixed_setup
    rng = np.random.default_rng(seed)
    x = _random_row(spec, rng)
    frozen = spec.columns_of(["c1", "region"])
    res = generate_cfx(CfxQuery(net, x, spec=spec, frozen=frozen), 0.0)
    if not res.found:
        pytest.skip("no counterfactual for this draw")
    xp = res.x_prime
    assert classify(net, xp) == 1 - classify(net, x)
    assert np.all(xp >= 0) and np.all(xp <= 1)
    assert xp[frozen].tolist() == x[frozen].tolist()
    for f, s in spec.slices():
        block = xp[s]
        if f.kind == "discrete":
            assert set(block.tolist()) <= {0.0, 1.0} and block.sum() == 1
        elif f.kind == "ordinal":
            assert set(block.tolist()) <= {0.0, 1.0} and np.all(np.diff(block) <= 0)
    assert res.distance == pytest.approx(np.mean(np.abs(xp - x)), abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_optimal_against_grid_search(seed):
    net = random_network([2, 4, 2], seed=seed, scale=2.0)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, 2)
    c = classify(net, x)
    grid = grid_cfx_distance(lambda p: classify(net, p), x, 1 - c)
    res = generate_cfx(CfxQuery(net, x), 0.0)
    if grid == np.inf:
        assert not res.found
        return
    assert res.distance <= grid + 1e-6
    assert grid <= res.distance + 0.01


def test_multiclass_target():
    net = random_network([2, 5, 3], seed=9, scale=2.0)
    x = np.array([0.5, 0.5])
    c = classify(net, x)
    for t in {0, 1, 2} - {c}:
        res = generate_cfx(CfxQuery(net, x, target=t), 0.0)
        if res.found:
            assert classify(net, res.x_prime) == t


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 5000), eps=st.lists(st.sampled_from([0.0, 0.1, 0.2, 0.4, 0.8]), min_size=2,
                                                 max_size=2, unique=True))
def test_distance_monotone_in_margin(seed, eps):
    net = random_network([3, 5, 2], seed=seed)
    x = np.random.default_rng(seed).uniform(0, 1, 3)
    q = CfxQuery(net, x, lower=-3, upper=3)
    lo, hi = sorted(eps)
    a, b = generate_cfx(q, lo), generate_cfx(q, hi)
    if b.found:
        assert a.found and a.distance <= b.distance


def test_result_json_roundtrip():
    r = CfxResult(np.array([0.25, 1.0]), 0.125, 0.4, 3, "yes", "robust", {"index": 7})
    d = json.loads(json.dumps(r.to_dict()))
    assert set(d) == {"x_prime", "distance", "epsilon", "iterations", "robust", "reason", "index"}
    back = CfxResult.from_dict(d)
    assert back.x_prime.tolist() == [0.25, 1.0] and back.extra == {"index": 7} and back.distance == 0.125
    absent = CfxResult(None, reason="none")
    assert absent.to_dict()["x_prime"] is None and absent.to_dict()["distance"] is None
