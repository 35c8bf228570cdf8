import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tspn.geometry import Line, tour_cost
from tspn.instance import DiscreteInstance, LineInstance, discretize_lines, line_tour_feasible
from tspn.oracle import (
    OracleCapError, brute_force_groups, cyclic_orders, exact_line_tspn, held_karp_groups, tour_fixed_line_order,
)
from tspn.suite import random_discrete, random_lines


def test_hk_two_singletons():
    inst = DiscreteInstance([[[0, 0]], [[3, 4]]])
    assert held_karp_groups(inst).cost == pytest.approx(10.0)


def test_hk_common_point():
    inst = DiscreteInstance([[[1, 1], [5, 0]], [[1, 1]], [[9, 9], [1, 1]]])
    res = held_karp_groups(inst)
    assert res.cost == 0.0 and inst.is_feasible(res.tour)


def test_hk_cap():
    with pytest.raises(OracleCapError):
        held_karp_groups(random_discrete(15, 15))


@pytest.mark.parametrize("seed", range(6))
def test_hk_matches_brute_force(seed):
    inst = random_discrete(5, 9, seed=seed)
    res = held_karp_groups(inst)
    assert res.cost == pytest.approx(brute_force_groups(inst), abs=1e-9)
    assert inst.is_feasible(res.tour)
    assert tour_cost(res.tour) == pytest.approx(res.cost, abs=1e-9)


def test_parallel_lines():
    res = tour_fixed_line_order([Line([0, 0, 0], [1, 0, 0]), Line([0, 1, 0], [1, 0, 0])])
    assert res.cost == pytest.approx(2.0, abs=1e-6)


def test_intersecting_lines():
    res = tour_fixed_line_order([Line([0, 0, 0], [1, 0, 0]), Line([3, -2, 0], [0, 1, 0])])
    assert res.cost == pytest.approx(0.0, abs=1e-6)


def _zoom_grid(lines, lo=-6.0, hi=6.0, k=41, rounds=12):
    """Dense grid search over line parameters, refined around the best cell."""
    B = np.array([ln.base for ln in lines])
    D = np.array([ln.dir for ln in lines])
    centre = np.zeros(len(lines))
    half = (hi - lo) / 2
    centre += (hi + lo) / 2
    best = math.inf
    for _ in range(rounds):
        axes = [np.linspace(c - half, c + half, k) for c in centre]
        T = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(lines))
        X = B[None] + T[..., None] * D[None]
        cost = np.linalg.norm(np.roll(X, -1, axis=1) - X, axis=2).sum(1)
        j = int(np.argmin(cost))
        best = min(best, float(cost[j]))
        centre = T[j]
        half *= 0.25
    return best


def test_triangle_lines_match_grid_search():
    a, b, c = np.array([0, 0, 0.0]), np.array([4, 0, 0.0]), np.array([1, 3, 0.0])
    lines = [Line.through(a, b), Line.through(b, c), Line.through(c, a)]
    res = tour_fixed_line_order(lines)
    perim = np.linalg.norm(a - b) + np.linalg.norm(b - c) + np.linalg.norm(c - a)
    assert res.cost <= perim
    assert res.cost == pytest.approx(_zoom_grid(lines), abs=1e-4)


@pytest.mark.parametrize("seed", range(3))
def test_skew_lines_match_grid_search(seed):
    inst = random_lines(3, seed=seed, side=2.0)
    res = exact_line_tspn(inst)
    assert res.cost == pytest.approx(_zoom_grid(inst.lines, -8, 8), abs=1e-4)


def test_concurrent_lines():
    inst = LineInstance(3, [Line([1, 1, 1], d) for d in ([1, 0, 0], [0, 1, 0], [1, 1, 1])])
    assert exact_line_tspn(inst).cost == pytest.approx(0.0, abs=1e-6)


def test_two_lines_same_as_fixed_order():
    inst = random_lines(2, seed=4)
    assert exact_line_tspn(inst).cost == pytest.approx(tour_fixed_line_order(inst.lines).cost, abs=1e-12)


def test_cyclic_orders_count():
    for n in range(3, 7):
        assert len(list(cyclic_orders(n))) == math.factorial(n - 1) // 2


def test_line_cap():
    with pytest.raises(OracleCapError):
        exact_line_tspn(random_lines(9))


@pytest.mark.parametrize("seed", range(4))
def test_cross_oracle_inequality(seed):
    inst = random_lines(4, seed=seed)
    cont = exact_line_tspn(inst)
    assert line_tour_feasible(inst, cont.tour)
    disc = held_karp_groups(discretize_lines(inst))
    assert disc.cost >= cont.cost - 1e-6


@given(st.integers(0, 10**6))
@settings(max_examples=15, deadline=None)
def test_fixed_order_deterministic_and_feasible(seed):
    inst = random_lines(3, seed=seed)
    a = tour_fixed_line_order(inst.lines)
    b = tour_fixed_line_order(inst.lines)
    assert a.cost == b.cost
    assert line_tour_feasible(inst, a.tour)
    # any one-point-per-line tour is an upper bound
    rng = np.random.default_rng(seed)
    for _ in range(5):
        X = np.array([ln.base + rng.normal() * ln.dir for ln in inst.lines])
        assert a.cost <= np.linalg.norm(np.roll(X, -1, axis=0) - X, axis=1).sum() + 1e-9
