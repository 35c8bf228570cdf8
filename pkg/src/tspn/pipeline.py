"""End-to-end driver: guesses x shifts -> DAG -> rounding -> union of tours -> one tour."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .dpgraph import DEFAULT_BUDGET, DagBudgetError, InfeasibleError, build_dag, groups, tree_to_tour
from .geometry import Tour, tour_cost
from .instance import DiscreteInstance, LineInstance, discretize_lines, line_tour_feasible
from .quadtree import (
    GuessContext, build_quadtree, enumerate_guesses, guess_radius, perturb,
    powers_of_two_between, random_shift,
)
from .stgst import solve_stgst


@dataclass
class RunConfig:
    m: int = 1
    r: int = 2
    shifts: int = 4
    c: float = 4.0
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    guess_filter: str = "anchor"  # "anchor" | "all"
    max_paths: int | None = None  # None: unlimited in the plane, 1 in higher dimensions
    max_samples: int | None = None
    uncross: bool = True

    def __post_init__(self):
        if self.m < 1 or self.r < 2 or self.shifts < 1 or self.c <= 0 or self.budget < 1:
            raise ValueError("m, shifts, c, budget must be positive and r >= 2")
        if self.guess_filter not in ("anchor", "all"):
            raise ValueError(f"unknown guess filter {self.guess_filter!r}")

    def paths_cap(self, dim: int):
        if self.max_paths is not None:
            return self.max_paths
        return None if dim == 2 else 1


@dataclass
class RunReport:
    records: list = field(default_factory=list)
    tour: Tour | None = None
    cost: float = math.inf
    best_index: int | None = None
    seconds: float = 0.0
    oracle_cost: float | None = None

    @property
    def ratio(self) -> float | None:
        if self.oracle_cost is None:
            return None
        if self.oracle_cost == 0:
            return 1.0 if self.cost <= 1e-9 else math.inf
        return self.cost / self.oracle_cost


# -- stitching --------------------------------------------------------------

def _closest(P, A, B):
    d = np.linalg.norm(P[A][:, None, :] - P[B][None, :, :], axis=2)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return A[i], B[j], float(d[i, j])


def stitch(points: np.ndarray, cycles: list[list[int]]) -> list[int]:
    """Join closed walks over indexed points into one cyclic order.

    The walks' edges plus a doubled minimum spanning tree over component
    closest pairs form a connected Eulerian multigraph; its Euler circuit,
    shortcut past repeated points, is the result.
    """
    G = nx.MultiGraph()
    for cyc in cycles:
        G.add_nodes_from(cyc)
        if len(cyc) > 1:
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                if a != b:
                    G.add_edge(a, b)
    if G.number_of_nodes() == 0:
        return []
    comps = [sorted(c) for c in nx.connected_components(G)]
    comps.sort()
    if len(comps) > 1:
        H = nx.Graph()
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                a, b, w = _closest(points, comps[i], comps[j])
                H.add_edge(i, j, weight=w, link=(a, b))
        for i, j, data in sorted(nx.minimum_spanning_edges(H, data=True)):
            a, b = data["link"]
            G.add_edge(a, b)
            G.add_edge(a, b)
    if G.number_of_edges() == 0:
        return [next(iter(G.nodes))]
    start = min(G.nodes)
    order, seen = [], set()
    for u, _ in nx.eulerian_circuit(G, source=start):
        if u not in seen:
            seen.add(u)
            order.append(u)
    return order


def uncross(points: np.ndarray, order: list[int]) -> list[int]:
    """2-opt segment reversals until no move shortens the tour; removes crossings."""
    order = list(order)
    n = len(order)
    if n < 4:
        return order
    P = points
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            a, b = P[order[i]], P[order[i + 1]]
            for j in range(i + 2, n if i > 0 else n - 1):
                c, d = P[order[j]], P[order[(j + 1) % n]]
                delta = (np.linalg.norm(a - c) + np.linalg.norm(b - d)
                         - np.linalg.norm(a - b) - np.linalg.norm(c - d))
                if delta < -1e-12:
                    order[i + 1:j + 1] = order[i + 1:j + 1][::-1]
                    a, b = P[order[i]], P[order[i + 1]]
                    improved = True
    return order


def stitch_and_detour(tours: list[list[int]], inst: DiscreteInstance, uncovered=None,
                      do_uncross: bool = False):
    """One closed tour over ``inst.points`` indices covering every group.

    ``tours`` are cyclic index lists.  Groups not met by the stitched tour
    (or listed in ``uncovered``) get their point closest to the tour inserted
    right after the nearest waypoint.  Returns (order, number of detours).
    """
    P = inst.points
    order = stitch(P, [list(t) for t in tours if len(t)])
    if not order:
        order = [inst.group_index[0][0]]
    on = set(order)
    todo = set(uncovered or [])
    todo |= {i for i in range(inst.n) if not any(p in on for p in inst.group_index[i])}
    detours = 0
    for i in sorted(todo):
        if any(p in on for p in inst.group_index[i]):
            continue
        W = P[order]
        cand = inst.group_index[i]
        d = np.linalg.norm(W[:, None, :] - P[cand][None, :, :], axis=2)
        w, k = np.unravel_index(np.argmin(d), d.shape)
        order.insert(int(w) + 1, cand[k])
        on.add(cand[k])
        detours += 1
    if do_uncross:
        order = uncross(P, order)
    return order, detours


# -- guesses ----------------------------------------------------------------

def _greedy_bound(inst: DiscreteInstance, j: int) -> float:
    """Cost of a nearest-uncovered-group tour from point j; an upper bound on OPT through j."""
    P = inst.points
    cur = j
    covered = set(inst.members[j])
    cost = 0.0
    while len(covered) < inst.n:
        best = (math.inf, None)
        for i in range(inst.n):
            if i in covered:
                continue
            for p in inst.group_index[i]:
                dist = float(np.linalg.norm(P[p] - P[cur]))
                if dist < best[0]:
                    best = (dist, p)
        cost += best[0]
        cur = best[1]
        covered |= inst.members[cur]
    return cost + float(np.linalg.norm(P[cur] - P[j]))


def select_guesses(inst: DiscreteInstance, how: str = "anchor") -> list[GuessContext]:
    """Guess contexts; "anchor" keeps v0 in the smallest group and R <= the greedy bound.

    Every tour meets the smallest group, and a tour through v0 of cost C stays
    within C/2 of v0, so the anchored set still contains a correct guess.
    """
    if how == "all":
        return enumerate_guesses(inst)
    anchor = min(range(inst.n), key=lambda i: (len(inst.group_index[i]), i))
    out = []
    for j in inst.group_index[anchor]:
        R0 = guess_radius(inst, j)
        dist = np.linalg.norm(inst.points - inst.points[j], axis=1)
        if R0 == 0.0:
            out.append(GuessContext(j, inst.points[j].copy(), 0.0, 0.0, np.flatnonzero(dist == 0.0)))
            continue
        hi = min(4 * inst.n * R0, max(R0, _greedy_bound(inst, j) / 2))
        Rs = powers_of_two_between(R0, hi)
        top = powers_of_two_between(hi, 2 * hi)[:1]
        for R in sorted(set(Rs + top)):
            if R > 4 * inst.n * R0 * (1 + 1e-12):
                continue
            keep = np.flatnonzero(dist <= R * (1 + 1e-12))
            out.append(GuessContext(j, inst.points[j].copy(), R0, R, keep))
    return out


# -- driver -----------------------------------------------------------------

def _sample_tours(h, pi, report):
    """Distinct rounded trees as cyclic lists of original point indices."""
    seen = set()
    tours = []
    for t in report.samples:
        if t.nodes in seen:
            continue
        seen.add(t.nodes)
        tour, _ = tree_to_tour(t, h)
        lookup = {tuple(float(x) for x in p): j for j, p in enumerate(pi.points)}
        cyc = []
        for p, meta in zip(tour.waypoints, tour.meta):
            if meta["visit"]:
                for o in pi.origin[lookup[tuple(float(x) for x in p)]]:
                    if not cyc or cyc[-1] != o:
                        cyc.append(o)
        if len(cyc) > 1 and cyc[0] == cyc[-1]:
            cyc.pop()
        if cyc:
            tours.append(cyc)
    return tours


def run_tspn(inst: DiscreteInstance, cfg: RunConfig | None = None) -> RunReport:
    cfg = cfg or RunConfig()
    t0 = time.perf_counter()
    rep = RunReport()
    P = inst.points
    for j in range(inst.N):
        if len(inst.members[j]) == inst.n:
            rep.tour, rep.cost = Tour(P[[j]]), 0.0
            rep.records.append({"guess": -1, "status": "single point covers every group", "cost": 0.0})
            rep.best_index = 0
            rep.seconds = time.perf_counter() - t0
            return rep
    guesses = select_guesses(inst, cfg.guess_filter)
    guesses.sort(key=lambda g: (g.R0, g.R, g.v0_index))
    cap = cfg.paths_cap(inst.dim)
    for gi, ctx in enumerate(guesses):
        # a tour through v0 costs at least 2 R0
        if 2 * ctx.R0 >= rep.cost:
            rep.records.append({"guess": gi, "v0": ctx.v0_index, "R": ctx.R, "status": "pruned"})
            continue
        pi = perturb(inst, ctx)
        rng = np.random.default_rng([cfg.seed, gi])
        for si in range(cfg.shifts):
            shift = random_shift(pi.L, pi.dim, rng)
            rec = {"guess": gi, "v0": ctx.v0_index, "R": ctx.R, "shift": shift.tolist()}
            rep.records.append(rec)
            try:
                h = build_dag(build_quadtree(pi, shift), cfg.m, cfg.r, budget=cfg.budget, max_paths=cap)
                S = groups(h, inst.n)
                rr = solve_stgst(h, S, cfg.c, seed=cfg.seed * 1_000_003 + gi * 1009 + si,
                                 max_samples=cfg.max_samples)
            except (InfeasibleError, DagBudgetError) as exc:
                rec["status"] = f"skipped: {exc}"
                continue
            tours = _sample_tours(h, pi, rr)
            order, detours = stitch_and_detour(tours, inst, rr.uncovered, cfg.uncross)
            tour = Tour(P[order])
            cost = tour_cost(tour)
            rec.update(
                status="ok", nodes=h.n_nodes, edges=h.n_edges, lp=rr.lp_objective * pi.unit,
                samples=rr.ell, distinct=len(tours), mean_sample=rr.mean_cost * pi.unit,
                detours=detours, cost=cost,
            )
            if cost < rep.cost:
                rep.tour, rep.cost, rep.best_index = tour, cost, len(rep.records) - 1
    if rep.tour is None:
        raise InfeasibleError("every guess failed; see the run records")
    if not inst.is_feasible(rep.tour, 1e-9):
        raise AssertionError("final tour misses a neighborhood")
    rep.seconds = time.perf_counter() - t0
    return rep


def run_line_tspn(inst: LineInstance, cfg: RunConfig | None = None) -> RunReport:
    d = discretize_lines(inst)
    rep = run_tspn(d, cfg)
    if not line_tour_feasible(inst, rep.tour, 1e-6):
        raise AssertionError("final tour misses a line")
    return rep
