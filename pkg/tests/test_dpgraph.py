import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tspn.dpgraph import (
    CYCLE, DagBudgetError, SolutionTree, TourNotLightError, binary_dissection, build_dag, dp_tsp, groups,
    tour_to_tree, tree_from_choice, tree_to_tour, validate_solution_tree,
)
from tspn.geometry import Tour, tour_cost
from tspn.instance import DiscreteInstance
from tspn.quadtree import NOTHING, GuessContext, build_quadtree, enumerate_guesses, perturb, random_shift, solve_leaf
from tspn.stgst import enumerate_trees
from tspn.suite import random_discrete


def setup(seed, n=3, N=5, tsp=False):
    inst = random_discrete(n, N, seed=seed)
    rng = np.random.default_rng(seed)
    ctxs = enumerate_guesses(inst)
    pi = perturb(inst, ctxs[rng.integers(len(ctxs))])
    tree = build_quadtree(pi, random_shift(pi.L, 2, rng))
    return inst, pi, tree, build_dag(tree, 1, 2, tsp_mode=tsp)


def single_point():
    inst = DiscreteInstance([[[1.0, 2.0]]])
    pi = perturb(inst, GuessContext(0, inst.points[0], 1.0, 1.0, np.arange(1)))
    return pi, build_quadtree(pi, [0, 0])


def test_single_point_chain():
    pi, tree = single_point()
    h = build_dag(tree, 1, 2)
    assert h.stats()["height"] == 2 and h.max_out_degree == 1
    leaves = [v for v in range(h.n_nodes) if h.is_leaf(v)]
    # the visit-free cycle state is infeasible and pruned
    assert len(leaves) == 1 and h.bit[leaves[0]] is True and h.state[leaves[0]] == CYCLE
    assert groups(h) == [leaves]


@given(st.integers(0, 10**6))
@settings(max_examples=15, deadline=None)
def test_structure(seed):
    inst, pi, tree, h = setup(seed)
    d = pi.dim
    assert h.height <= 2 * d * tree.height + 1
    order = h.topo_order()
    assert len(order) == h.n_nodes  # acyclic
    pos = {v: i for i, v in enumerate(order)}
    assert all(pos[u] < pos[v] for u in range(h.n_nodes) for v in h.out[u])
    indeg = Counter(v for u in range(h.n_nodes) for v in h.out[u])
    for v in range(h.n_nodes):
        if h.kind[v] == "comb":
            assert indeg[v] == 1
    assert h.state[h.root] in (CYCLE, NOTHING) or h.state[h.root] == ()
    # leaf-entering costs match an independent recomputation
    for v in range(h.n_nodes):
        if h.is_leaf(v):
            box = h.boxes[h.cell[v]]
            p = tuple(float(x) for x in h.points[box.points[0]]) if box.points else None
            assert h.leaf_cost[v] == pytest.approx(solve_leaf(h.state[v], p, h.bit[v])[0], abs=1e-9)


def test_groups_definition():
    inst, pi, tree, h = setup(4)
    S = groups(h, inst.n)
    for i, s in enumerate(S):
        expect = [v for v in range(h.n_nodes) if h.is_leaf(v) and h.bit[v]
                  and i in h.members[h.boxes[h.cell[v]].points[0]]]
        assert sorted(s) == sorted(expect)


def test_groups_merged_point():
    inst = DiscreteInstance([[[0.0, 0.0]], [[0.0, 0.0]], [[8.0, 3.0]]])
    ctx = [c for c in enumerate_guesses(inst) if c.v0_index == 0][0]
    pi = perturb(inst, ctx)
    h = build_dag(build_quadtree(pi, [0, 0]), 1, 2)
    S = groups(h, 3)
    assert S[0] == S[1]


def test_validate_rules():
    inst, pi, tree, h = setup(2, tsp=True)
    res = dp_tsp(pi, tree)
    t = res.tree
    assert validate_solution_tree(t, h := res.dag)
    comb = next(v for v in t.nodes if h.kind[v] == "comb" and len(h.out[v]) == 2)
    child = h.out[comb][0]
    dropped = SolutionTree(t.nodes - {child}, frozenset(e for e in t.edges if child not in e))
    assert not validate_solution_tree(dropped, h)
    sub = next(v for v in t.nodes if h.kind[v] == "sub" and len(h.out[v]) > 1)
    other = next(c for c in h.out[sub] if c not in t.nodes)
    extra = SolutionTree(t.nodes | {other}, t.edges | {(sub, other)})
    assert not validate_solution_tree(extra, h)


def test_two_points_cost():
    inst = DiscreteInstance([[[0.0, 0.0]], [[3.0, 4.0]]])
    ctx = enumerate_guesses(inst)[0]
    pi = perturb(inst, ctx)
    res = dp_tsp(pi, build_quadtree(pi, [0, 0]))
    a, b = pi.points.astype(float)
    # the light tour bends at a portal, so it is never shorter than the out-and-back
    assert res.cost >= 2 * np.linalg.norm(a - b) - 1e-9
    pts = {tuple(p) for p, m in zip(res.tour.waypoints, res.tour.meta) if m["visit"]}
    assert pts == {tuple(a), tuple(b)}
    assert tour_cost(res.tour) == pytest.approx(res.cost, abs=1e-9)


def _parity_ok(h, t):
    cnt = Counter()
    for v in t.nodes:
        if h.is_leaf(v) and h.state[v] not in (CYCLE, NOTHING):
            for a, b in h.state[v]:
                cnt[a] += 1
                cnt[b] += 1
    return all(c % 2 == 0 for c in cnt.values())


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_round_trip_random_trees(seed):
    inst, pi, tree, h = setup(seed)
    rng = np.random.default_rng(seed)
    t = tree_from_choice(h, lambda v: h.out[v][rng.integers(len(h.out[v]))])
    assert validate_solution_tree(t, h)
    tour, vis = tree_to_tour(t, h)
    assert tour_cost(tour) == pytest.approx(t.cost(h), abs=1e-9)
    expect = sorted(h.boxes[h.cell[v]].points[0] for v in t.nodes if h.is_leaf(v) and h.bit[v])
    assert vis == expect
    t2 = tour_to_tree(tour, h)
    assert validate_solution_tree(t2, h)
    assert t2.cost(h) == pytest.approx(t.cost(h), abs=1e-9)
    assert tree_to_tour(t2, h)[1] == vis
    assert _parity_ok(h, t)


@pytest.mark.parametrize("seed", range(5))
def test_dp_tour_back_to_tree(seed):
    inst, pi, tree, h = setup(seed, tsp=True)
    res = dp_tsp(pi, tree)
    t = tour_to_tree(res.tour, res.dag)
    assert validate_solution_tree(t, res.dag)
    assert t.cost(res.dag) == pytest.approx(res.cost, abs=1e-9)


def test_off_portal_tour_rejected():
    inst, pi, tree, h = setup(1, n=4, N=4, tsp=True)
    straight = Tour(pi.points.astype(float))
    with pytest.raises(TourNotLightError, match="facet"):
        tour_to_tree(straight, h)


@pytest.mark.parametrize("seed", range(4))
def test_min_tree_cost_equals_dp(seed):
    inst = random_discrete(3, 3, seed=seed)
    pi = perturb(inst, enumerate_guesses(inst)[0])
    res = dp_tsp(pi, build_quadtree(pi, [0, 0]))
    costs = [c for _, c in enumerate_trees(res.dag, limit=200_000)]
    assert min(costs) == pytest.approx(res.cost, abs=1e-9)


def test_budget_error_names_budget():
    inst, pi, tree, _ = setup(0)
    with pytest.raises(DagBudgetError, match="budget of 10"):
        build_dag(tree, 1, 2, budget=10)


def test_binary_dissection_leaves_hold_one_point():
    inst, pi, tree, h = setup(3, n=4, N=8)
    boxes = binary_dissection(tree)
    held = sorted(j for b in boxes if b.is_leaf for j in b.points)
    assert held == list(range(len(pi.points)))
    assert all(len(b.points) <= 1 for b in boxes if b.is_leaf)


def test_dump(tmp_path):
    _, _, _, h = setup(0)
    path = tmp_path / "dag.txt"
    h.dump(path)
    lines = path.read_text().splitlines()
    assert sum(l.startswith("node ") for l in lines) == h.n_nodes
    assert sum(l.startswith("edge ") for l in lines) == h.n_edges
