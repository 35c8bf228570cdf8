"""Solution-tree group Steiner tree: LP relaxation, top-down rounding, exact search.

Works on any AND/OR graph exposing ``kind`` ("sub"/"comb" per node), ``out``
(children lists), ``root``, ``is_leaf(v)`` and ``leaf_cost`` (cost of entering
a leaf).  ``DpGraph`` and ``AndOrGraph`` both qualify.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .dpgraph import InfeasibleError, SolutionTree, validate_solution_tree

ZERO = 1e-12


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class AndOrGraph:
    kind: list
    out: list
    leaf_cost: dict
    root: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.kind)

    def is_leaf(self, v) -> bool:
        return self.kind[v] == "sub" and not self.out[v]


def _edges(h):
    u, v, c = [], [], []
    for a in range(h.n_nodes):
        for b in h.out[a]:
            u.append(a)
            v.append(b)
            c.append(h.leaf_cost[b] if h.is_leaf(b) else 0.0)
    return np.array(u, dtype=np.int64), np.array(v, dtype=np.int64), np.array(c, dtype=float)


@dataclass
class FractionalSolution:
    eu: np.ndarray
    ev: np.ndarray
    cost: np.ndarray
    x: np.ndarray
    objective: float
    y: np.ndarray  # node in-values, root = 1

    def edge_value(self, u, v) -> float:
        hit = np.flatnonzero((self.eu == u) & (self.ev == v))
        return float(self.x[hit[0]]) if hit.size else 0.0


def lp_relax(h, groups, tol: float = 1e-7) -> FractionalSolution:
    """Flow relaxation: unit out-flow at the root, conservation at subproblem
    nodes, replication through combination nodes, and unit coverage per group.

    Replication makes every edge around a combination node carry the same
    value, so the program is solved with one variable per combination node
    and expanded back to edge values.
    """
    for i, s in enumerate(groups):
        if not s:
            raise InfeasibleError(f"group {i} is empty")
    eu, ev, cost = _edges(h)
    n = h.n_nodes
    combs = [v for v in range(n) if h.kind[v] == "comb"]
    col = {c: k for k, c in enumerate(combs)}
    ccost = np.array([sum(h.leaf_cost[w] for w in h.out[c] if h.is_leaf(w)) for c in combs], dtype=float)
    into = [[] for _ in range(n)]  # combination parents of each subproblem node
    for c in combs:
        for w in h.out[c]:
            into[w].append(col[c])
    rows, cols, vals, rhs = [], [], [], []
    r = 0
    for v in range(n):
        if h.kind[v] != "sub" or not h.out[v]:
            continue
        for c in h.out[v]:
            rows.append(r); cols.append(col[c]); vals.append(1.0)
        if v == h.root:
            rhs.append(1.0)
        else:
            for k in into[v]:
                rows.append(r); cols.append(k); vals.append(-1.0)
            rhs.append(0.0)
        r += 1
    A_eq = coo_matrix((vals, (rows, cols)), shape=(r, len(combs))).tocsr()
    rows, cols, vals = [], [], []
    for i, s in enumerate(groups):
        for v in s:
            for k in into[v]:
                rows.append(i); cols.append(k); vals.append(-1.0)
    A_ub = coo_matrix((vals, (rows, cols)), shape=(len(groups), len(combs))).tocsr()
    res = linprog(
        ccost, A_ub=A_ub, b_ub=-np.ones(len(groups)), A_eq=A_eq, b_eq=np.array(rhs),
        bounds=(0.0, 1.0), method="highs",
        options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol},
    )
    if res.status == 2:
        reach = _reachable(h)
        for i, s in enumerate(groups):
            if not any(reach[v] for v in s):
                raise InfeasibleError(f"group {i} is unreachable from the root")
        raise InfeasibleError("no solution tree covers all groups")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    z = np.clip(res.x, 0.0, 1.0)
    z[z < ZERO] = 0.0
    zc = np.zeros(n)
    zc[combs] = z
    x = np.where(np.array([h.kind[u] == "comb" for u in eu], dtype=bool), zc[eu], zc[ev]) if len(eu) else np.zeros(0)
    y = np.zeros(n)
    np.add.at(y, ev, x)
    y[h.root] = 1.0
    return FractionalSolution(eu, ev, cost, x, float(cost @ x), y)


def _reachable(h):
    seen = [False] * h.n_nodes
    seen[h.root] = True
    stack = [h.root]
    while stack:
        for w in h.out[stack.pop()]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return seen


class _Sampler:
    def __init__(self, h, frac: FractionalSolution):
        self.h = h
        self.choices = {}
        for v in range(h.n_nodes):
            if h.kind[v] == "sub" and h.out[v]:
                self.choices[v] = ([], [])
        for e in range(len(frac.eu)):
            u = int(frac.eu[e])
            if u in self.choices:
                self.choices[u][0].append(int(frac.ev[e]))
                self.choices[u][1].append(frac.x[e])
        self.cum = {}
        for u, (targets, w) in self.choices.items():
            w = np.asarray(w)
            s = w.sum()
            self.cum[u] = (targets, np.cumsum(w) / s if s > ZERO else None)

    def sample(self, rng) -> SolutionTree:
        h = self.h
        nodes = set()
        edges = set()
        stack = [h.root]
        while stack:
            v = stack.pop()
            nodes.add(v)
            if h.kind[v] == "comb":
                for w in h.out[v]:
                    edges.add((v, w))
                    stack.append(w)
            elif v in self.cum:
                targets, cum = self.cum[v]
                if cum is None:
                    raise _ZeroMass(v)
                k = int(np.searchsorted(cum, rng.random(), side="right"))
                c = targets[min(k, len(targets) - 1)]
                edges.add((v, c))
                stack.append(c)
        return SolutionTree(frozenset(nodes), frozenset(edges))


class _ZeroMass(Exception):
    pass


def round_once(h, frac: FractionalSolution, seed, retries: int = 10, sampler=None) -> SolutionTree:
    """Top-down sample: subproblem nodes pick one child in proportion to x,
    combination nodes keep all children."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sampler = sampler or _Sampler(h, frac)
    for _ in range(retries):
        try:
            return sampler.sample(rng)
        except _ZeroMass as exc:
            last = exc
    raise RuntimeError(f"rounding reached node {last.args[0]} carrying no LP mass")


def tree_cost(h, t: SolutionTree) -> float:
    return float(sum(h.leaf_cost[v] for v in t.nodes if h.is_leaf(v)))


def covered_groups(t: SolutionTree, groups) -> list[bool]:
    return [any(v in t.nodes for v in s) for s in groups]


# -- exact search -----------------------------------------------------------

def _group_masks(h, groups):
    mask = {}
    for i, s in enumerate(groups):
        for v in s:
            mask[v] = mask.get(v, 0) | (1 << i)
    return mask


def _topo(h):
    indeg = [0] * h.n_nodes
    for u in range(h.n_nodes):
        for v in h.out[u]:
            indeg[v] += 1
    order, stack = [], [v for v in range(h.n_nodes) if indeg[v] == 0]
    while stack:
        u = stack.pop()
        order.append(u)
        for v in h.out[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return order


def exact_stgst(h, groups, budget: int = 100_000):
    """Minimum-cost covering solution tree via Pareto maps (covered mask -> cost).

    Ties go to the smaller child id.  ``budget`` caps the total number of map
    entries produced.
    """
    gm = _group_masks(h, groups)
    full = (1 << len(groups)) - 1
    table = {}
    arg = {}
    produced = 0
    for v in reversed(_topo(h)):
        own = gm.get(v, 0)
        if h.is_leaf(v):
            table[v] = {own: h.leaf_cost[v]}
            arg[v] = {own: None}
        elif h.kind[v] == "comb":
            cur = {0: 0.0}
            how = {0: ()}
            for w in h.out[v]:
                nxt, nhow = {}, {}
                for m1, c1 in cur.items():
                    for m2, c2 in table[w].items():
                        m, c = m1 | m2, c1 + c2
                        if m not in nxt or c < nxt[m]:
                            nxt[m], nhow[m] = c, how[m1] + (m2,)
                cur, how = nxt, nhow
            table[v], arg[v] = {}, {}
            for m, c in cur.items():
                m2 = m | own
                if m2 not in table[v] or c < table[v][m2]:
                    table[v][m2], arg[v][m2] = c, (m, how[m])
        else:
            best, barg = {}, {}
            for c in sorted(h.out[v]):
                for m, val in table[c].items():
                    m2 = m | own
                    if m2 not in best or val < best[m2]:
                        best[m2], barg[m2] = val, (c, m)
            table[v], arg[v] = best, barg
        produced += len(table[v])
        if produced > budget:
            raise BudgetExceeded(f"exact search exceeded its budget of {budget} entries")
    root_map = table[h.root]
    if full not in root_map:
        raise InfeasibleError("no solution tree covers all groups")
    nodes = set()

    def build(v, m):
        nodes.add(v)
        if h.is_leaf(v):
            return
        if h.kind[v] == "comb":
            _, parts = arg[v][m]
            for w, mw in zip(h.out[v], parts):
                build(w, mw)
        else:
            c, mc = arg[v][m]
            build(c, mc)

    build(h.root, full)
    return SolutionTree.from_nodes(h, nodes), root_map[full]


def enumerate_trees(h, limit: int = 1_000_000):
    """Every solution tree as (frozenset of nodes, cost); for tiny graphs."""
    memo = {}

    def trees(v):
        if v in memo:
            return memo[v]
        own = h.leaf_cost[v] if h.is_leaf(v) else 0.0
        if h.is_leaf(v):
            res = [(frozenset([v]), 0.0)]
        elif h.kind[v] == "comb":
            res = [(frozenset([v]), 0.0)]
            for w in h.out[v]:
                res = [(a | b, ca + cb + (h.leaf_cost[w] if h.is_leaf(w) else 0.0))
                       for a, ca in res for b, cb in trees(w)]
                if len(res) > limit:
                    raise BudgetExceeded("too many solution trees")
        else:
            res = []
            for c in h.out[v]:
                res += [(a | {v}, ca) for a, ca in trees(c)]
        memo[v] = res
        return res

    root_trees = trees(h.root)
    if h.is_leaf(h.root):
        return [(t, h.leaf_cost[h.root]) for t, _ in root_trees]
    return root_trees


def brute_force_stgst(h, groups):
    best = (math.inf, None)
    for nodes, cost in enumerate_trees(h):
        if all(any(v in nodes for v in s) for s in groups) and cost < best[0]:
            best = (cost, nodes)
    return best


def outcome_distribution(h, frac: FractionalSolution):
    """Exact distribution of round_once outputs as a list of (probability, node set)."""
    sampler = _Sampler(h, frac)
    memo = {}

    def dist(v):
        if v in memo:
            return memo[v]
        if h.kind[v] == "comb":
            res = [(1.0, frozenset([v]))]
            for w in h.out[v]:
                res = [(p * q, a | b) for p, a in res for q, b in dist(w)]
        elif v in sampler.cum:
            targets, w = sampler.choices[v]
            total = float(np.sum(w))
            res = []
            for c, x in zip(targets, w):
                if x > 0:
                    res += [(x / total * p, a | {v}) for p, a in dist(c)]
        else:
            res = [(1.0, frozenset([v]))]
        memo[v] = res
        return res

    return dist(h.root)


# -- repetition -------------------------------------------------------------

@dataclass
class RoundingReport:
    samples: list
    costs: list
    coverage: list  # per group, number of samples covering it
    lp_objective: float
    frac: FractionalSolution = field(repr=False)

    @property
    def ell(self) -> int:
        return len(self.samples)

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs))

    @property
    def uncovered(self) -> list[int]:
        return [i for i, c in enumerate(self.coverage) if c == 0]


def n_samples(c: float, n_groups: int, n_nodes: int) -> int:
    return max(1, math.ceil(c * max(1.0, math.log(n_groups)) * max(1.0, math.log(n_nodes))))


def solve_stgst(h, groups, c: float = 4.0, seed: int = 0, max_samples: int | None = None) -> RoundingReport:
    frac = lp_relax(h, groups)
    ell = n_samples(c, len(groups), h.n_nodes)
    if max_samples is not None:
        ell = min(ell, max_samples)
    sampler = _Sampler(h, frac)
    samples, costs = [], []
    cover = [0] * len(groups)
    for i in range(ell):
        t = round_once(h, frac, np.random.default_rng([seed, i]), sampler=sampler)
        samples.append(t)
        costs.append(tree_cost(h, t))
        for g, ok in enumerate(covered_groups(t, groups)):
            cover[g] += ok
    return RoundingReport(samples, costs, cover, frac.objective, frac)
