import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tspn.dpgraph import arora_tsp, dp_tsp
from tspn.instance import DiscreteInstance
from tspn.oracle import held_karp_groups
from tspn.quadtree import (
    CYCLE, INF, NOTHING, GuessContext, box_portals, build_quadtree, enumerate_guesses, facet_portals,
    guess_radius, perturb, portal_k, portals, powers_of_two_between, random_shift, solve_leaf,
)
from tspn.suite import random_discrete


def full_context(inst):
    v0 = inst.points[0]
    R = 2.0 ** math.ceil(math.log2(np.linalg.norm(inst.points - v0, axis=1).max()))
    return GuessContext(0, v0.copy(), R, R, np.arange(inst.N))


def point_instance(n, seed, side=10.0):
    return DiscreteInstance([[p] for p in np.random.default_rng(seed).uniform(0, side, (n, 2))])


# -- guessing -----------------------------------------------------------------

def test_single_neighborhood_single_context():
    ctxs = enumerate_guesses(DiscreteInstance([[[1.0, 2.0]]]))
    assert len(ctxs) == 1 and ctxs[0].R0 == 0.0


def test_R0_is_max_of_mins():
    inst = DiscreteInstance([[[0, 0]], [[5, 0], [9, 9]], [[0, 3]]])
    assert guess_radius(inst, 0) == 5.0


def test_guess_count_power_of_two_R0():
    # R0 = 4 for v0 = origin; powers of two in [4, 48] are 4, 8, 16, 32
    inst = DiscreteInstance([[[0, 0]], [[4, 0]], [[0, -2]]])
    rs = [c.R for c in enumerate_guesses(inst) if c.v0_index == 0]
    assert rs == [4.0, 8.0, 16.0, 32.0]
    assert len(rs) == math.floor(math.log2(4 * 3)) + 1


@given(st.floats(1e-3, 1e3), st.integers(1, 10))
@settings(max_examples=100, deadline=None)
def test_powers_of_two_in_range(R0, n):
    rs = powers_of_two_between(R0, 4 * n * R0)
    assert all(R0 <= r <= 4 * n * R0 * (1 + 1e-12) for r in rs)
    assert len(rs) in (math.floor(math.log2(4 * n)), math.floor(math.log2(4 * n)) + 1)
    assert all(math.log2(r) == round(math.log2(r)) for r in rs)


@given(st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_contexts_retain_every_group(seed):
    inst = random_discrete(3, 7, seed=seed)
    for c in enumerate_guesses(inst):
        assert c.R0 <= c.R <= 4 * inst.n * c.R0 * (1 + 1e-12)
        assert np.all(np.linalg.norm(inst.points[c.retained] - c.v0, axis=1) <= c.R * (1 + 1e-12))
        assert set().union(*(inst.members[p] for p in c.retained)) == set(range(inst.n))


# -- perturbation ----------------------------------------------------------------

@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_perturbation_properties(seed):
    inst = random_discrete(4, 10, seed=seed)
    ctxs = enumerate_guesses(inst)
    ctx = ctxs[seed % len(ctxs)]
    pi = perturb(inst, ctx)
    P = pi.points
    assert P.dtype.kind == "i" and np.all(P % 8 == 0) and P.min() >= 0
    D = np.abs(P[:, None] - P[None]).max(-1)
    D[np.diag_indices(len(P))] = 8
    assert D.min() >= 8
    assert P.max() < pi.L
    # every merged point knows the groups of its originals
    for j, orig in enumerate(pi.origin):
        assert pi.members[j] == frozenset().union(*(inst.members[o] for o in orig))
    # snapping moves a point by at most g * sqrt(d) / 2
    d = inst.dim
    for j, orig in enumerate(pi.origin):
        for o in orig:
            assert np.linalg.norm(pi.to_original(P[j]) - inst.points[o]) <= pi.g * math.sqrt(d) / 2 + 1e-9
    # cost distortion of a random tour through the retained points
    rng = np.random.default_rng(seed)
    where = {o: j for j, orig in enumerate(pi.origin) for o in orig}
    order = rng.permutation(ctx.retained)
    A = inst.points[order]
    B = np.array([pi.to_original(P[where[o]]) for o in order])
    cost = lambda X: np.linalg.norm(np.roll(X, -1, axis=0) - X, axis=1).sum()
    assert abs(cost(A) - cost(B)) <= 2 * len(order) * pi.g * math.sqrt(d)


def test_close_points_merge():
    inst = DiscreteInstance([[[0.0, 0.0]], [[0.0, 1e-9]], [[10.0, 0.0]]])
    pi = perturb(inst, full_context(inst))
    assert len(pi.points) == 2
    assert frozenset({0, 1}) in pi.members


# -- quadtree ------------------------------------------------------------------

def test_single_point_root_leaf():
    inst = DiscreteInstance([[[3.0, 4.0]]])
    pi = perturb(inst, GuessContext(0, inst.points[0], 1.0, 1.0, np.arange(1)))
    tree = build_quadtree(pi, [0, 0])
    assert tree.height <= math.log2(2 * pi.L)
    assert tree.leaves() == [0]


def test_four_quadrants():
    inst = DiscreteInstance([[[1, 1]], [[9, 1]], [[1, 9]], [[9, 9]]])
    pi = perturb(inst, full_context(inst))
    tree = build_quadtree(pi, [0, 0])
    leaves = {tree.leaf_of(j) for j in range(4)}
    assert len(leaves) == 4
    assert all(tree.cells[c].level >= 1 for c in leaves)


def test_bad_shift():
    inst = point_instance(3, 0)
    pi = perturb(inst, full_context(inst))
    with pytest.raises(ValueError):
        build_quadtree(pi, [pi.L, 0])


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_each_point_in_one_leaf(seed):
    inst = point_instance(16, seed)
    pi = perturb(inst, full_context(inst))
    tree = build_quadtree(pi, random_shift(pi.L, 2, np.random.default_rng(seed)))
    counts = np.zeros(len(pi.points), int)
    for c in tree.leaves():
        assert len(tree.cells[c].points) <= 1
        for j in tree.cells[c].points:
            counts[j] += 1
    assert np.all(counts == 1)
    assert tree.height <= math.log2(2 * pi.L)


# -- portals ---------------------------------------------------------------------

def test_portal_counts():
    inst = point_instance(2, 0)
    tree = build_quadtree(perturb(inst, full_context(inst)), [0, 0])
    assert len(portals(tree.cells[0], 1)) == 8
    assert len(portals(tree.cells[0], 3)) == 16


def test_portal_k_rules():
    assert portal_k(1, 3) == 1 and portal_k(9, 3) == 3
    with pytest.raises(ValueError):
        portal_k(2, 2)
    with pytest.raises(ValueError):
        portal_k(2, 3)


@pytest.mark.parametrize("k", [1, 3])
@pytest.mark.parametrize("d", [2, 3])
def test_shared_facet_portals(k, d):
    lo, hi = np.zeros(d), np.full(d, 8.0)
    lo2, hi2 = lo.copy(), hi.copy()
    lo2[0], hi2[0] = 8.0, 16.0
    left = {p for p in box_portals(lo, hi, k) if p[0] == 8.0}
    right = {p for p in box_portals(lo2, hi2, k) if p[0] == 8.0}
    assert left == right == set(facet_portals(lo, hi, 0, 8.0, k))
    # halving a box across another axis keeps the parent's portals on that facet
    mid = hi.copy()
    mid[1] = 4.0
    parent = {p for p in box_portals(lo, hi, k) if p[0] == 0.0 and p[1] <= 4.0}
    child = {p for p in box_portals(lo, mid, k) if p[0] == 0.0}
    assert parent <= child


# -- leaf multipaths ---------------------------------------------------------------

def test_leaf_straight_segment():
    cost, polys = solve_leaf((((0.0, 0.0), (3.0, 4.0)),))
    assert cost == 5.0 and polys == [[(0.0, 0.0), (3.0, 4.0)]]


def test_leaf_colinear_point():
    cost, _ = solve_leaf((((0.0, 0.0), (4.0, 0.0)),), (1.0, 0.0), True)
    assert cost == pytest.approx(4.0)


def test_leaf_two_pairs_brute_force():
    pairs = (((0.0, 0.0), (0.0, 8.0)), ((8.0, 0.0), (8.0, 8.0)))
    p = (6.0, 3.0)
    cost, polys = solve_leaf(pairs, p, True)
    base = 16.0
    options = [base + math.dist(u, p) + math.dist(p, v) - math.dist(u, v) for u, v in pairs]
    assert cost == pytest.approx(min(options))
    assert p in polys[1]


def test_leaf_special_states():
    assert solve_leaf(CYCLE, (1.0, 1.0), True)[0] == 0.0
    assert solve_leaf(CYCLE, (1.0, 1.0), False)[0] == INF
    assert solve_leaf(NOTHING, (1.0, 1.0), True)[0] == INF
    assert solve_leaf(NOTHING)[0] == 0.0
    with pytest.raises(ValueError):
        solve_leaf(NOTHING, None, True)


# -- classic TSP ---------------------------------------------------------------------

def test_tsp_one_and_two_points():
    assert arora_tsp([[1.0, 1.0]]) == ([0], 0.0)
    order, cost = arora_tsp([[0.0, 0.0], [3.0, 4.0]], shifts=2)
    assert sorted(order) == [0, 1] and cost == pytest.approx(10.0)


@pytest.mark.parametrize("seed", range(3))
def test_tsp_seven_points_within_twice_optimum(seed):
    pts = np.random.default_rng(seed).uniform(0, 10, (7, 2))
    order, cost = arora_tsp(pts, 1, 2, shifts=16, seed=seed)
    opt = held_karp_groups(DiscreteInstance([[p] for p in pts])).cost
    assert sorted(order) == list(range(7))
    assert cost <= 2 * opt + 1e-9


@pytest.mark.parametrize("seed", range(2))
def test_dp_monotone_in_m_and_r(seed):
    inst = point_instance(5, seed)
    pi = perturb(inst, full_context(inst))
    tree = build_quadtree(pi, random_shift(pi.L, 2, np.random.default_rng(seed)))
    base = dp_tsp(pi, tree, 1, 2).cost
    assert dp_tsp(pi, tree, 3, 2).cost <= base + 1e-9
    assert dp_tsp(pi, tree, 1, 3).cost <= base + 1e-9


def test_dp_deterministic():
    inst = point_instance(6, 3)
    pi = perturb(inst, full_context(inst))
    tree = build_quadtree(pi, [3, 5])
    a, b = dp_tsp(pi, tree), dp_tsp(pi, tree)
    assert a.cost == b.cost and np.array_equal(a.tour.waypoints, b.tour.waypoints)
