"""The multipath dynamic program as an explicit AND/OR graph.

Subproblem nodes are (cell, state[, visit bit]) table entries; combination nodes
are consistent ways of splitting a cell's state between its two children.  The
dissection is binary: each box is halved along one axis at a time, cycling
through the axes, and a box holding at most one point is a leaf.  Two
consecutive levels therefore correspond to one quadtree level in the plane.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import Tour
from .instance import DiscreteInstance
from .quadtree import (
    CYCLE, INF, NOTHING, GuessContext, ShiftedQuadtree, build_quadtree, box_portals,
    facet_portals, perturb, portal_k, random_shift, solve_leaf,
)

DEFAULT_BUDGET = 5_000_000


class DagBudgetError(RuntimeError):
    pass


class InfeasibleError(RuntimeError):
    pass


class TourNotLightError(ValueError):
    pass


# -- dissection -------------------------------------------------------------

@dataclass
class Box:
    lo: tuple
    hi: tuple
    points: list[int]
    parent: int | None
    depth: int
    axis: int | None = None
    split: float | None = None
    children: tuple | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    def contains(self, x, tol=0.0) -> bool:
        return all(self.lo[j] - tol <= x[j] <= self.hi[j] + tol for j in range(len(self.lo)))


def binary_dissection(tree: ShiftedQuadtree) -> list[Box]:
    pi = tree.pi
    d = pi.dim
    lo = tuple(float(v) for v in -tree.shift)
    hi = tuple(float(v) for v in 2 * pi.L - tree.shift)
    boxes = [Box(lo, hi, list(range(len(pi.points))), None, 0)]
    queue = deque([(0, 0)])
    while queue:
        bi, axis = queue.popleft()
        b = boxes[bi]
        if len(b.points) <= 1 or b.hi[axis] - b.lo[axis] <= 1:
            continue
        mid = (b.lo[axis] + b.hi[axis]) / 2
        lo_a, hi_a = b.lo, b.hi[:axis] + (mid,) + b.hi[axis + 1:]
        lo_b, hi_b = b.lo[:axis] + (mid,) + b.lo[axis + 1:], b.hi
        pa = [j for j in b.points if pi.points[j][axis] < mid]
        pb = [j for j in b.points if pi.points[j][axis] >= mid]
        ia = len(boxes)
        boxes.append(Box(lo_a, hi_a, pa, bi, b.depth + 1))
        boxes.append(Box(lo_b, hi_b, pb, bi, b.depth + 1))
        b.axis, b.split, b.children = axis, mid, (ia, ia + 1)
        queue.append((ia, (axis + 1) % d))
        queue.append((ia + 1, (axis + 1) % d))
    return boxes


# -- states -----------------------------------------------------------------

def canonical(pairs):
    """Sorted tuple of sorted pairs, plus index map and orientation flags for the input order."""
    norm = []
    for i, (u, v) in enumerate(pairs):
        if v < u:
            norm.append(((v, u), i, True))
        else:
            norm.append(((u, v), i, False))
    norm.sort(key=lambda t: (t[0], t[1]))
    where = [0] * len(pairs)
    flip = [False] * len(pairs)
    for k, (_, i, f) in enumerate(norm):
        where[i] = k
        flip[i] = f
    return tuple(t[0] for t in norm), where, flip


def _facet_keys(u, lo, hi):
    keys = []
    for j in range(len(lo)):
        if u[j] == lo[j]:
            keys.append((j, 0))
        elif u[j] == hi[j]:
            keys.append((j, 1))
    return tuple(keys)


def _facet_counts_ok(pairs, lo, hi, r, cache=None) -> bool:
    cnt = defaultdict(int)
    for pair in pairs:
        for u in pair:
            keys = cache.get(u) if cache is not None else None
            if keys is None:
                keys = _facet_keys(u, lo, hi)
                if cache is not None:
                    cache[u] = keys
            for key in keys:
                cnt[key] += 1
                if cnt[key] > r:
                    return False
    return True


def _tvectors(parities, budget):
    """All t with t_i >= 0, t_i = parities[i] mod 2, sum <= budget."""
    if not parities:
        yield ()
        return
    first, rest = parities[0], parities[1:]
    for t in range(first, budget + 1, 2):
        for tail in _tvectors(rest, budget - t):
            yield (t,) + tail


def _split_paths(pairs, axis, c, F, r, cap=None):
    """Ways to route the parent's paths through the two children.

    Yields (raw_a, raw_b, routes): child pair lists and, per parent pair, the
    ordered pieces (slot, raw index) tracing it from its first to second end.
    ``cap`` bounds the number of pieces per child.
    """
    sides = []
    for u, v in pairs:
        su = (0,) if u[axis] < c else (1,) if u[axis] > c else (0, 1)
        sv = (0,) if v[axis] < c else (1,) if v[axis] > c else (0, 1)
        sides.append((su, sv))
    choices = [s for pair in sides for s in pair]
    for assign in itertools.product(*choices):
        ends = [(assign[2 * i], assign[2 * i + 1]) for i in range(len(pairs))]
        parities = [int(a != b) for a, b in ends]
        for tv in _tvectors(parities, r):
            if cap is not None:
                per = [0, 0]
                for (su, _), t in zip(ends, tv):
                    per[su] += (t + 2) // 2
                    per[1 - su] += (t + 1) // 2
                if max(per) > cap:
                    continue
            total = sum(tv)
            for seq in itertools.product(F, repeat=total):
                raw = ([], [])
                routes = []
                pos = 0
                for i, (u, v) in enumerate(pairs):
                    glue = seq[pos:pos + tv[i]]
                    pos += tv[i]
                    side = ends[i][0]
                    cur = u
                    route = []
                    for g in glue:
                        raw[side].append((cur, g))
                        route.append((side, len(raw[side]) - 1))
                        cur, side = g, 1 - side
                    raw[side].append((cur, v))
                    route.append((side, len(raw[side]) - 1))
                    routes.append(route)
                yield raw[0], raw[1], routes


def _split_cycle(F, r, pts_a, pts_b):
    """Ways to realize a closed tour inside the parent."""
    if pts_a:
        yield [], [], [[(0, -1)]], (CYCLE, None)
    if pts_b:
        yield [], [], [[(1, -1)]], (None, CYCLE)
    for total in range(2, r + 1, 2):
        for seq in itertools.product(F, repeat=total):
            raw = ([], [])
            route = []
            for i in range(total):
                side = i % 2
                raw[side].append((seq[i], seq[(i + 1) % total]))
                route.append((side, len(raw[side]) - 1))
            yield raw[0], raw[1], [route], (None, None)


# -- the graph --------------------------------------------------------------

@dataclass
class DpGraph:
    boxes: list[Box]
    points: np.ndarray  # grid coordinates of the merged points
    members: list[frozenset]
    m: int
    r: int
    tsp_mode: bool
    kind: list = field(default_factory=list)  # "sub" | "comb"
    cell: list = field(default_factory=list)
    state: list = field(default_factory=list)
    bit: list = field(default_factory=list)  # visit bit, None off the leaves
    out: list = field(default_factory=list)
    routes: dict = field(default_factory=dict)
    leaf_cost: dict = field(default_factory=dict)
    leaf_paths: dict = field(default_factory=dict)
    root: int = 0

    def __post_init__(self):
        self.index = {}
        self.comb_index = {}

    @property
    def n_nodes(self) -> int:
        return len(self.kind)

    def is_leaf(self, v) -> bool:
        return self.kind[v] == "sub" and self.bit[v] is not None

    def edges(self):
        """(u, v, cost) for every edge; only edges entering leaves carry cost."""
        for u in range(self.n_nodes):
            for v in self.out[u]:
                yield u, v, self.leaf_cost.get(v, 0.0) if self.is_leaf(v) else 0.0

    def edge_arrays(self):
        e = list(self.edges())
        if not e:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        u, v, c = zip(*e)
        return np.array(u), np.array(v), np.array(c, dtype=float)

    @property
    def n_edges(self) -> int:
        return sum(len(o) for o in self.out)

    @property
    def height(self) -> int:
        """Edges on the longest root-to-leaf path."""
        memo = {}
        for v in reversed(self.topo_order()):
            memo[v] = 1 + max((memo[w] for w in self.out[v]), default=-1)
        return memo[self.root]

    @property
    def max_out_degree(self) -> int:
        return max(len(o) for o in self.out)

    def topo_order(self):
        """Nodes with every parent before its children."""
        indeg = [0] * self.n_nodes
        for u in range(self.n_nodes):
            for v in self.out[u]:
                indeg[v] += 1
        order, queue = [], deque(v for v in range(self.n_nodes) if indeg[v] == 0)
        while queue:
            u = queue.popleft()
            order.append(u)
            for v in self.out[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
        return order

    def stats(self) -> dict:
        return {
            "nodes": self.n_nodes,
            "subproblem_nodes": self.kind.count("sub"),
            "combination_nodes": self.kind.count("comb"),
            "edges": self.n_edges,
            "height": self.height,
            "max_out_degree": self.max_out_degree,
        }

    def dump(self, path) -> None:
        lines = []
        for v in range(self.n_nodes):
            if self.kind[v] == "sub":
                lines.append(f"node {v} sub cell={self.cell[v]} bit={self.bit[v]} state={hash(self.state[v]) & 0xffffffff:08x}")
            else:
                lines.append(f"node {v} comb cell={self.cell[v]}")
        for u, v, c in self.edges():
            lines.append(f"edge {u} {v} {c:.17g}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def build_dag(tree: ShiftedQuadtree, m: int, r: int, tsp_mode: bool = False,
              budget: int = DEFAULT_BUDGET, max_paths: int | None = None) -> DpGraph:
    """Materialize every reachable subproblem and combination, then prune dead nodes."""
    pi = tree.pi
    d = pi.dim
    k = portal_k(m, d)
    boxes = binary_dissection(tree)
    pts = [tuple(float(x) for x in p) for p in pi.points]

    kind, cell, state, bit, out = [], [], [], [], []
    routes, index = {}, {}
    comb_keys = {}

    def check_budget():
        if len(kind) > budget:
            raise DagBudgetError(f"node budget of {budget} exceeded while building the graph")

    def sub(ci, st, b):
        key = (ci, st, b)
        v = index.get(key)
        if v is None:
            v = index[key] = len(kind)
            kind.append("sub")
            cell.append(ci)
            state.append(st)
            bit.append(b)
            out.append([])
            check_budget()
            if b is None:
                queue.append(v)
        return v

    def state_ok(ci, st):
        bx = boxes[ci]
        if st == CYCLE:
            return bool(bx.points)
        if max_paths is not None and len(st) > max_paths:
            return False
        if not bx.points and any(u == v for u, v in st):
            return False
        if tsp_mode and bx.points and not st:
            return False
        return True

    def bit_options(ci, st):
        bx = boxes[ci]
        if not bx.is_leaf:
            return [None]
        if not bx.points:
            return [False] if st != CYCLE else []
        opts = [True] if tsp_mode else [False, True]
        good = []
        for b in opts:
            if st == CYCLE and not b:
                continue
            if st == NOTHING and b:
                continue
            if not b and st != CYCLE and any(u == v for u, v in st):
                continue
            good.append(b)
        return good

    def add_comb(parent, children, rts):
        key = (parent,) + tuple(children)
        if key in comb_keys:
            return
        c = len(kind)
        comb_keys[key] = c
        kind.append("comb")
        cell.append(cell[parent])
        state.append(None)
        bit.append(None)
        out.append(list(children))
        out[parent].append(c)
        routes[c] = rts
        check_budget()

    facet_cache = defaultdict(dict)
    queue = deque()
    root_box = boxes[0]
    if root_box.is_leaf:
        root = sub(0, CYCLE, None)
        queue.clear()  # the root cell is not split
        leaf = sub(0, CYCLE, True)
        add_comb(root, [leaf], [[(0, -1, True)]])
    else:
        root = sub(0, CYCLE, None)

    while queue:
        v = queue.popleft()
        ci, X = cell[v], state[v]
        bx = boxes[ci]
        if bx.is_leaf:
            continue
        ca, cb = bx.children
        F = facet_portals(bx.lo, bx.hi, bx.axis, bx.split, k)
        if X == CYCLE:
            gen = (
                (ra, rb, rts, fixed)
                for ra, rb, rts, fixed in _split_cycle(F, r, boxes[ca].points, boxes[cb].points)
            )
        elif X == NOTHING:
            gen = iter([([], [], [], (None, None))])
        else:
            gen = (
                (ra, rb, rts, (None, None))
                for ra, rb, rts in _split_paths(list(X), bx.axis, bx.split, F, r, max_paths)
            )
        seen = set()
        for ra, rb, rts, fixed in gen:
            kids = []
            maps = []
            ok = True
            for slot, (cc, raw) in enumerate(((ca, ra), (cb, rb))):
                if fixed[slot] is not None:
                    kids.append(fixed[slot])
                    maps.append(None)
                    continue
                if fixed[1 - slot] is not None:
                    kids.append(NOTHING)
                    maps.append(None)
                    continue
                cbox = boxes[cc]
                if max_paths is not None and len(raw) > max_paths:
                    ok = False
                    break
                if not _facet_counts_ok(raw, cbox.lo, cbox.hi, r, facet_cache[cc]):
                    ok = False
                    break
                st, where, flip = canonical(raw)
                kids.append(st)
                maps.append((where, flip))
            if not ok:
                continue
            key = tuple(kids)
            if key in seen:
                continue
            seen.add(key)
            if not all(state_ok(cc, st) for cc, st in zip((ca, cb), kids)):
                continue
            final = []
            for route in rts:
                fr = []
                for slot, idx in route:
                    if idx < 0:
                        fr.append((slot, -1, True))
                    else:
                        where, flip = maps[slot]
                        fr.append((slot, where[idx], not flip[idx]))
                final.append(fr)
            opts_a = bit_options(ca, kids[0])
            opts_b = bit_options(cb, kids[1])
            for ba in opts_a:
                for bb in opts_b:
                    add_comb(v, [sub(ca, kids[0], ba), sub(cb, kids[1], bb)], final)

    leaf_cost, leaf_paths = {}, {}
    for v in range(len(kind)):
        if kind[v] == "sub" and bit[v] is not None:
            bx = boxes[cell[v]]
            p = pts[bx.points[0]] if bx.points else None
            cost, polys = solve_leaf(state[v], p, bit[v])
            leaf_cost[v] = cost
            leaf_paths[v] = polys

    # prune nodes that cannot be completed
    n = len(kind)
    alive = [False] * n
    order = sorted(range(n), key=lambda v: -_layer(boxes, cell, kind, bit, v))
    for v in order:
        if kind[v] == "sub":
            if bit[v] is not None:
                alive[v] = leaf_cost[v] < INF
            else:
                alive[v] = any(alive[c] for c in out[v])
        else:
            alive[v] = all(alive[c] for c in out[v])
    if not alive[root]:
        raise InfeasibleError("no feasible root state under the given (m, r)")
    reach = [False] * n
    reach[root] = True
    stack = [root]
    while stack:
        u = stack.pop()
        for w in out[u]:
            if alive[w] and not reach[w]:
                reach[w] = True
                stack.append(w)
    keep = [v for v in range(n) if alive[v] and reach[v]]
    new_id = {v: i for i, v in enumerate(keep)}

    h = DpGraph(boxes, pi.points, pi.members, m, r, tsp_mode)
    for v in keep:
        h.kind.append(kind[v])
        h.cell.append(cell[v])
        h.state.append(state[v])
        h.bit.append(bit[v])
        h.out.append([new_id[w] for w in out[v] if w in new_id])
        if kind[v] == "comb":
            h.routes[new_id[v]] = routes[v]
        elif bit[v] is not None:
            h.leaf_cost[new_id[v]] = leaf_cost[v]
            h.leaf_paths[new_id[v]] = leaf_paths[v]
    h.root = new_id[root]
    for v in range(h.n_nodes):
        if h.kind[v] == "sub":
            h.index[(h.cell[v], h.state[v], h.bit[v])] = v
    for u in range(h.n_nodes):
        if h.kind[u] == "sub":
            for c in h.out[u]:
                h.comb_index[(u,) + tuple(h.out[c])] = c
    return h


def _layer(boxes, cell, kind, bit, v):
    depth = boxes[cell[v]].depth
    base = 3 * depth
    if kind[v] == "comb":
        return base + 1
    if bit[v] is not None and boxes[cell[v]].is_leaf and depth == 0:
        return base + 2
    return base


# -- groups and solution trees ----------------------------------------------

def groups(h: DpGraph, n_groups: int | None = None) -> list[list[int]]:
    """S_i: leaf nodes with the visit bit set whose cell holds a point of neighborhood i."""
    if n_groups is None:
        n_groups = 1 + max(max(m) for m in h.members if m)
    out = [[] for _ in range(n_groups)]
    for v in range(h.n_nodes):
        if h.is_leaf(v) and h.bit[v]:
            j = h.boxes[h.cell[v]].points[0]
            for i in h.members[j]:
                out[i].append(v)
    for i, s in enumerate(out):
        if not s:
            raise InfeasibleError(f"group {i} has no visiting leaf node")
    return out


@dataclass(frozen=True)
class SolutionTree:
    nodes: frozenset
    edges: frozenset  # (u, v) pairs

    @classmethod
    def from_nodes(cls, h: DpGraph, nodes) -> "SolutionTree":
        nodes = frozenset(nodes)
        return cls(nodes, frozenset((u, v) for u in nodes for v in h.out[u] if v in nodes))

    def cost(self, h: DpGraph) -> float:
        return float(sum(h.leaf_cost[v] for v in self.nodes if h.is_leaf(v)))


def validate_solution_tree(t: SolutionTree, h: DpGraph) -> bool:
    if h.root not in t.nodes:
        return False
    children = defaultdict(list)
    indeg = defaultdict(int)
    for u, v in t.edges:
        if u not in t.nodes or v not in t.nodes or v not in h.out[u]:
            return False
        children[u].append(v)
        indeg[v] += 1
    for v in t.nodes:
        if v == h.root:
            if indeg[v]:
                return False
        elif indeg[v] != 1:
            return False
        if h.kind[v] == "comb":
            if sorted(children[v]) != sorted(h.out[v]):
                return False
        elif h.is_leaf(v):
            if children[v]:
                return False
        elif len(children[v]) != 1:
            return False
    seen = {h.root}
    stack = [h.root]
    while stack:
        for w in children[stack.pop()]:
            if w in seen:
                return False
            seen.add(w)
            stack.append(w)
    return seen == set(t.nodes)


def min_cost_values(h: DpGraph):
    """Cheapest completion of every node and the best combination per subproblem."""
    val = [INF] * h.n_nodes
    best = {}
    for v in reversed(h.topo_order()):
        if h.kind[v] == "comb":
            val[v] = sum(val[w] for w in h.out[v])
        elif h.is_leaf(v):
            val[v] = h.leaf_cost[v]
        else:
            for c in h.out[v]:
                if val[c] < val[v]:
                    val[v], best[v] = val[c], c
    return val, best


def tree_from_choice(h: DpGraph, choose) -> SolutionTree:
    nodes = set()
    stack = [h.root]
    while stack:
        v = stack.pop()
        nodes.add(v)
        if h.kind[v] == "comb":
            stack.extend(h.out[v])
        elif not h.is_leaf(v):
            stack.append(choose(v))
    return SolutionTree.from_nodes(h, nodes)


# -- tree -> tour -----------------------------------------------------------

class _Poly:
    """Polyline with the leaf cell of each segment and a visit flag per vertex."""

    __slots__ = ("pts", "seg", "vis")

    def __init__(self, pts, seg, vis):
        self.pts, self.seg, self.vis = pts, seg, vis

    def reversed(self):
        return _Poly(self.pts[::-1], self.seg[::-1], self.vis[::-1])

    def extend(self, other):
        if self.pts[-1] != other.pts[0]:
            raise AssertionError("pieces do not meet at a shared portal")
        self.vis[-1] = self.vis[-1] or other.vis[0]
        self.pts += other.pts[1:]
        self.seg += other.seg
        self.vis += other.vis[1:]


def _expand(h, choice, v, idx, forward):
    if h.is_leaf(v):
        ci = h.cell[v]
        if h.state[v] == CYCLE:
            return _Poly([h.leaf_paths[v][0][0]], [ci], [True])
        poly = list(h.leaf_paths[v][idx])
        vis = [False] * len(poly)
        if len(poly) == 3:
            vis[1] = True
        out = _Poly(poly, [ci] * (len(poly) - 1), vis)
        return out if forward else out.reversed()
    c = choice[v]
    kids = h.out[c]
    route = h.routes[c][0 if idx < 0 else idx]
    if idx < 0 and len(route) == 1 and route[0][1] < 0:
        return _expand(h, choice, kids[route[0][0]], -1, True)
    acc = None
    for slot, j, fwd in route:
        piece = _expand(h, choice, kids[slot], j, fwd)
        if acc is None:
            acc = piece
        else:
            acc.extend(piece)
    if idx < 0:
        # close the cycle: the last vertex repeats the first
        acc.vis[0] = acc.vis[0] or acc.vis[-1]
        acc.pts.pop()
        acc.vis.pop()
        return acc
    return acc if forward else acc.reversed()


def tree_to_tour(t: SolutionTree, h: DpGraph):
    """Closed tour of the tree's leaf multipaths, in grid coordinates, and its visited points.

    ``meta`` records for each waypoint the leaf cell of its outgoing segment and
    whether it is a visited point.
    """
    if not validate_solution_tree(t, h):
        raise ValueError("not a valid solution tree")
    choice = {}
    for u, v in t.edges:
        if h.kind[u] == "sub":
            choice[u] = v
    poly = _expand(h, choice, h.root, -1, True)
    meta = [{"cell": poly.seg[i], "visit": poly.vis[i]} for i in range(len(poly.pts))]
    visited = sorted(
        h.boxes[h.cell[v]].points[0] for v in t.nodes if h.is_leaf(v) and h.bit[v]
    )
    return Tour(np.array(poly.pts, dtype=float), meta), visited


# -- tour -> tree -----------------------------------------------------------

def _leaf_boxes(h):
    return [i for i, b in enumerate(h.boxes) if b.is_leaf]


def _segment_cells(tour: Tour, h: DpGraph):
    w = [tuple(float(x) for x in p) for p in tour.waypoints]
    if tour.meta is not None:
        return w, [m["cell"] for m in tour.meta], [bool(m["visit"]) for m in tour.meta]
    leaves = _leaf_boxes(h)
    pts = {tuple(float(x) for x in h.points[j]) for j in range(len(h.points))}
    seg, vis = [], []
    n = len(w)
    for i in range(n):
        a, b = w[i], w[(i + 1) % n]
        hit = [c for c in leaves if h.boxes[c].contains(a) and h.boxes[c].contains(b)]
        if not hit:
            home = [c for c in leaves if h.boxes[c].contains(a)]
            if not home:
                raise TourNotLightError(f"waypoint {a} lies outside the dissection")
            bx = h.boxes[home[0]]
            for j in range(len(a)):
                if b[j] < bx.lo[j] or b[j] > bx.hi[j]:
                    val = bx.lo[j] if b[j] < bx.lo[j] else bx.hi[j]
                    raise TourNotLightError(
                        f"segment {i} leaves cell {home[0]} through facet axis={j} value={val} away from a portal"
                    )
        seg.append(hit[0])
        vis.append(w[i] in pts and any(
            tuple(float(x) for x in h.points[p]) == w[i] for p in h.boxes[hit[0]].points
        ))
    return w, seg, vis


def tour_to_tree(f: Tour, h: DpGraph) -> SolutionTree:
    """Solution tree whose states record how ``f`` meets every cell."""
    w, seg, vis = _segment_cells(f, h)
    n = len(w)
    boxes = h.boxes
    k = portal_k(h.m, boxes[0].lo.__len__())
    states = {}
    bits = {}
    if n == 1 or len(set(seg)) == 1:
        leaf = seg[0]
        if not any(vis):
            raise TourNotLightError("tour inside a single cell must visit its point")
        c = leaf
        while c is not None:
            states[c] = CYCLE
            c = boxes[c].parent
        bits[leaf] = True
    else:
        start = next(i for i in range(n) if seg[i - 1] != seg[i])
        order = [(start + i) % n for i in range(n)]
        runs = []  # (leaf, entry, exit, visit)
        for i in order:
            if runs and runs[-1][0] == seg[i] and i != start:
                leaf, entry, _, v = runs[-1]
                runs[-1] = (leaf, entry, w[(i + 1) % n], v or vis[i])
            else:
                runs.append((seg[i], w[i], w[(i + 1) % n], vis[i]))
        # every run endpoint must be a portal of its leaf
        for leaf, entry, exit_, _ in runs:
            bx = boxes[leaf]
            ports = set(box_portals(bx.lo, bx.hi, k))
            for x in (entry, exit_):
                if x not in ports:
                    axis = next((j for j in range(len(x)) if x[j] in (bx.lo[j], bx.hi[j])), None)
                    raise TourNotLightError(
                        f"tour crosses cell {leaf} facet axis={axis} at {x}, which is not a portal"
                    )
        under = defaultdict(set)
        for ri, (leaf, *_rest) in enumerate(runs):
            c = leaf
            while c is not None:
                under[c].add(ri)
                c = boxes[c].parent
        nr = len(runs)
        for c, rs in under.items():
            if len(rs) == nr:
                states[c] = CYCLE
                continue
            pairs = []
            for ri in range(nr):
                if ri in rs and (ri - 1) % nr not in rs:
                    j = ri
                    while (j + 1) % nr in rs:
                        j = (j + 1) % nr
                    pairs.append((runs[ri][1], runs[j][2]))
            states[c] = canonical(pairs)[0]
        for leaf, _, _, v in runs:
            bits[leaf] = bits.get(leaf, False) or v
    nodes = set()

    def node_of(c):
        st = states.get(c, NOTHING)
        b = None
        if boxes[c].is_leaf:
            b = bits.get(c, False)
        key = (c, st, b)
        if key not in h.index:
            raise TourNotLightError(f"cell {c} has no table entry for the tour's state (too many crossings?)")
        return h.index[key]

    root = h.root
    nodes.add(root)
    if boxes[0].is_leaf:
        leaf = node_of(0)
        nodes.add(h.out[root][0])
        nodes.add(leaf)
        return SolutionTree.from_nodes(h, nodes)
    stack = [(0, root)]
    while stack:
        c, v = stack.pop()
        bx = boxes[c]
        if bx.is_leaf:
            continue
        ca, cb = bx.children
        va, vb = node_of(ca), node_of(cb)
        comb = h.comb_index.get((v, va, vb))
        if comb is None:
            raise TourNotLightError(f"cell {c} has no combination matching the tour's crossings")
        nodes.update((comb, va, vb))
        stack.append((ca, va))
        stack.append((cb, vb))
    return SolutionTree.from_nodes(h, nodes)


# -- classic TSP mode -------------------------------------------------------

@dataclass
class DpResult:
    tour: Tour  # grid coordinates
    cost: float
    tree: SolutionTree
    dag: DpGraph


def dp_tsp(pi, tree: ShiftedQuadtree, m: int = 1, r: int = 2, budget: int = DEFAULT_BUDGET,
           max_paths: int | None = None) -> DpResult:
    """Cheapest (m, r)-light tour through every point of the perturbed instance."""
    h = build_dag(tree, m, r, tsp_mode=True, budget=budget, max_paths=max_paths)
    val, best = min_cost_values(h)
    if val[h.root] == INF:
        raise InfeasibleError("no feasible tour under the given (m, r)")
    t = tree_from_choice(h, best.__getitem__)
    tour, _ = tree_to_tour(t, h)
    return DpResult(tour, val[h.root], t, h)


def arora_tsp(points, m: int = 1, r: int = 2, shifts: int = 16, seed: int = 0):
    """Point TSP via the portal dynamic program; best tour over random shifts.

    Returns (order, cost): the visiting order of the input points taken from the
    dynamic-program tour, and the cost of that closed order in input coordinates.
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 1:
        return [0], 0.0
    inst = DiscreteInstance([[p] for p in points])
    v0 = inst.points[0]
    R = 2.0 ** math.ceil(math.log2(max(np.linalg.norm(inst.points - v0, axis=1).max(), 1e-300)))
    ctx = GuessContext(0, v0.copy(), R, R, np.arange(inst.N))
    pi = perturb(inst, ctx)
    rng = np.random.default_rng(seed)
    best = (INF, None)
    for _ in range(shifts):
        res = dp_tsp(pi, build_quadtree(pi, random_shift(pi.L, pi.dim, rng)), m, r)
        order = _visit_order(res.tour, pi)
        pts = inst.points[order]
        cost = float(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).sum())
        if cost < best[0]:
            best = (cost, order)
    return best[1], best[0]


def _visit_order(tour: Tour, pi) -> list[int]:
    """Original point indices in the order the tour visits their merged points."""
    lookup = {tuple(float(x) for x in p): j for j, p in enumerate(pi.points)}
    order = []
    for p, meta in zip(tour.waypoints, tour.meta):
        if meta["visit"]:
            j = lookup[tuple(float(x) for x in p)]
            for o in pi.origin[j]:
                if o not in order:
                    order.append(o)
    return order
