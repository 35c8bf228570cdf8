import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tspn.geometry import Line, Tour, tour_cost
from tspn.instance import DiscreteInstance, LineInstance, line_tour_feasible
from tspn.oracle import held_karp_groups
from tspn.pipeline import RunConfig, run_line_tspn, run_tspn, select_guesses, stitch, stitch_and_detour, uncross
from tspn.suite import random_discrete


def cyc_cost(P, order):
    X = P[order]
    return float(np.linalg.norm(np.roll(X, -1, axis=0) - X, axis=1).sum()) if len(order) > 1 else 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(r=1)
    with pytest.raises(ValueError):
        RunConfig(guess_filter="none")
    assert RunConfig().paths_cap(2) is None and RunConfig().paths_cap(3) == 1


def test_singleton_neighborhood():
    rep = run_tspn(DiscreteInstance([[[2.0, 3.0]]]))
    assert rep.cost == 0.0 and np.allclose(rep.tour.waypoints, [[2.0, 3.0]])


def test_two_singletons():
    inst = DiscreteInstance([[[0.0, 0.0]], [[3.0, 4.0]]])
    rep = run_tspn(inst, RunConfig(shifts=2))
    assert rep.cost == pytest.approx(10.0)
    assert inst.is_feasible(rep.tour)


def test_stitch_identity():
    P = np.random.default_rng(0).uniform(0, 1, (5, 2))
    order, detours = stitch_and_detour([[0, 1, 2, 3, 4]], DiscreteInstance([[p] for p in P]))
    assert detours == 0
    k = order.index(0)
    rot = order[k:] + order[:k]
    assert rot in ([0, 1, 2, 3, 4], [0, 4, 3, 2, 1])


def test_stitch_two_tours_bound():
    P = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [5, 0], [6, 0], [6, 1]], float)
    a, b = [0, 1, 2, 3], [4, 5, 6]
    g = 4.0  # gap between (1,0) and (5,0)
    order = stitch(P, [a, b])
    assert sorted(order) == list(range(7))
    assert cyc_cost(P, order) <= cyc_cost(P, a) + cyc_cost(P, b) + 2 * g + 1e-12


def test_detour_bound():
    P = [[0, 0], [2, 0], [2, 2], [0, 2]]
    inst = DiscreteInstance([[p] for p in P] + [[[1.0, 5.0]]])
    base = cyc_cost(inst.points, [0, 1, 2, 3])
    order, detours = stitch_and_detour([[0, 1, 2, 3]], inst)
    near = min(np.linalg.norm(inst.points[4] - inst.points[:4], axis=1))
    assert detours == 1
    assert cyc_cost(inst.points, order) <= base + 2 * near + 1e-12


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_stitch_bound_random(seed):
    import networkx as nx

    rng = np.random.default_rng(seed)
    P = rng.uniform(0, 10, (12, 2))
    perm = rng.permutation(12)
    cuts = sorted(rng.choice(np.arange(1, 12), size=int(rng.integers(1, 4)), replace=False))
    cycles = [list(c) for c in np.split(perm, cuts)]
    order = stitch(P, cycles)
    assert sorted(order) == list(range(12))
    # bound: cycles + doubled MST over component closest pairs
    H = nx.Graph()
    for i in range(len(cycles)):
        for j in range(i + 1, len(cycles)):
            d = np.linalg.norm(P[cycles[i]][:, None] - P[cycles[j]][None], axis=2).min()
            H.add_edge(i, j, weight=d)
    mst = sum(d["weight"] for *_, d in nx.minimum_spanning_edges(H, data=True)) if len(cycles) > 1 else 0.0
    assert cyc_cost(P, order) <= sum(cyc_cost(P, c) for c in cycles) + 2 * mst + 1e-9
    assert cyc_cost(P, uncross(P, order)) <= cyc_cost(P, order) + 1e-9


@pytest.fixture(scope="module")
def small_run():
    inst = random_discrete(4, 8, seed=42)
    cfg = RunConfig(seed=3, shifts=2)
    return inst, cfg, run_tspn(inst, cfg)


def test_run_feasible_and_within_ratio(small_run):
    inst, _, rep = small_run
    assert inst.is_feasible(rep.tour)
    opt = held_karp_groups(inst).cost
    assert rep.cost <= 4.0 * opt
    assert tour_cost(rep.tour) == pytest.approx(rep.cost)


def test_best_over_records(small_run):
    _, _, rep = small_run
    costs = [r["cost"] for r in rep.records if r.get("status") == "ok"]
    assert costs and rep.cost == min(costs)
    assert rep.records[rep.best_index]["cost"] == rep.cost


def test_run_reproducible(small_run):
    inst, cfg, rep = small_run
    again = run_tspn(inst, cfg)
    assert again.cost == rep.cost
    assert np.array_equal(again.tour.waypoints, rep.tour.waypoints)


def test_detour_fraction(small_run):
    _, _, rep = small_run
    ok = [r for r in rep.records if r.get("status") == "ok"]
    assert sum(r["detours"] > 0 for r in ok) <= 0.1 * len(ok)


def test_guess_filters():
    inst = random_discrete(3, 6, seed=1)
    every = select_guesses(inst, "all")
    some = select_guesses(inst, "anchor")
    assert 0 < len(some) <= len(every)


def test_intersecting_lines_near_zero():
    inst = LineInstance(3, [Line([0, 0, 0], [1, 0, 0]), Line([2, -1, 0], [0, 1, 0])])
    rep = run_line_tspn(inst, RunConfig(shifts=1))
    assert rep.cost <= 1e-9
    assert line_tour_feasible(inst, rep.tour)
