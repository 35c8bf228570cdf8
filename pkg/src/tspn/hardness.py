"""Generators and numeric verifiers for the two lower-bound constructions.

The flattened-cube construction in R^3 maps a tripartite vertex-cover
instance to lines; the high-dimensional construction maps a general graph,
blown up by independent copies, to lines through near-equidistant points.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    FLATTEN, Line, Tour, plane_angle, plane_normal, points_lines_distances,
    segment_intersects_ball, segments_line_distance, skew_distance_3d, tour_cost,
)
from .instance import LineInstance

SIGMA = math.sqrt(0.67)
AXIS = np.ones(3) / math.sqrt(3.0)

# cube edges e^1, e^2, e^3 as (start, end); vertex v^a_i sits at (n+i)/(3n) along e^a
CUBE_EDGES = np.array([
    [[0, 0, 1], [1, 0, 1]],
    [[1, 0, 0], [1, 1, 0]],
    [[0, 1, 0], [0, 1, 1]],
], dtype=float)
# outward normals of the two cube faces through each edge
FACE_NORMALS = np.array([
    [[0, -1, 0], [0, 0, 1]],
    [[1, 0, 0], [0, 0, -1]],
    [[-1, 0, 0], [0, 1, 0]],
], dtype=float)


class NotTripartiteError(ValueError):
    pass


class VertexCoverError(ValueError):
    pass


class EmbeddingError(RuntimeError):
    pass


# -- graphs -----------------------------------------------------------------

@dataclass
class TripartiteGraph:
    """Vertices (a, i), a in {1, 2, 3}, i in 1..n; edges only between classes."""

    n: int
    edges: list

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("class size must be positive")
        clean = set()
        for u, v in self.edges:
            u, v = tuple(int(x) for x in u), tuple(int(x) for x in v)
            for a, i in (u, v):
                if a not in (1, 2, 3) or not 1 <= i <= self.n:
                    raise ValueError(f"vertex {(a, i)} outside classes of size {self.n}")
            if u[0] == v[0]:
                raise NotTripartiteError(f"edge {u}-{v} joins two vertices of class {u[0]}")
            clean.add(tuple(sorted((u, v))))
        self.edges = sorted(clean)

    @classmethod
    def from_classes(cls, sizes, edges, pad: str = "vertices"):
        """Pad classes of the given sizes to a common size.

        ``pad="vertices"`` pads every class to the total vertex count, as the
        reduction does; ``pad="max"`` pads to the largest class.
        """
        sizes = [int(s) for s in sizes]
        if len(sizes) != 3 or min(sizes) < 0:
            raise ValueError("need three class sizes")
        if sum(sizes) == 0:
            raise ValueError("graph has no vertices")
        for u, v in edges:
            for a, i in (u, v):
                if not 1 <= a <= 3 or not 1 <= i <= sizes[a - 1]:
                    raise ValueError(f"vertex {(a, i)} not in its class")
        n = sum(sizes) if pad == "vertices" else max(sizes)
        return cls(n, list(edges))

    def vertices(self):
        return [(a, i) for a in (1, 2, 3) for i in range(1, self.n + 1)]

    def is_cover(self, cover) -> bool:
        return self.uncovered_edge(cover) is None

    def uncovered_edge(self, cover):
        cover = {tuple(v) for v in cover}
        for u, v in self.edges:
            if u not in cover and v not in cover:
                return (u, v)
        return None


def complete_tripartite(k: int, pad: str = "vertices") -> TripartiteGraph:
    edges = [((a, i), (b, j)) for a, b in ((1, 2), (1, 3), (2, 3))
             for i in range(1, k + 1) for j in range(1, k + 1)]
    return TripartiteGraph.from_classes([k, k, k], edges, pad)


@dataclass
class Graph:
    n: int
    edges: list

    def __post_init__(self):
        clean = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v or not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"bad edge {(u, v)}")
            clean.add((min(u, v), max(u, v)))
        self.edges = sorted(clean)

    @classmethod
    def from_networkx(cls, g):
        idx = {v: k for k, v in enumerate(sorted(g.nodes))}
        return cls(len(idx), [(idx[u], idx[v]) for u, v in g.edges])

    def uncovered_edge(self, cover):
        cover = set(int(v) for v in cover)
        for u, v in self.edges:
            if u not in cover and v not in cover:
                return (u, v)
        return None


# -- the cube construction ----------------------------------------------------

def vertex_point(a: int, i: int, n: int) -> np.ndarray:
    """Unflattened position of v^a_i on the middle third of cube edge e^a."""
    s, e = CUBE_EDGES[a - 1]
    return s + (n + i) / (3 * n) * (e - s)


def _unit(v):
    return v / np.linalg.norm(v)


def _steps(length: float, delta: float) -> int:
    f = length / delta
    k = round(f)
    if k >= 1 and abs(f - k) <= 1e-9:
        return k
    return math.floor(f) + 1


def _delta_run(A, B, delta: float, out) -> np.ndarray:
    """Points after A up to B, every step exactly delta.

    The run is straight except for one isoceles tent, bulging towards
    ``out``, whose two unit steps absorb the fractional part of |AB|/delta.
    """
    v = B - A
    ell = float(np.linalg.norm(v))
    u = v / ell
    f = ell / delta
    k = round(f)
    if k >= 1 and abs(f - k) <= 1e-9:
        pts = A + np.outer(np.arange(1, k + 1) * delta, u)
        pts[-1] = B
        return pts
    j = math.floor(f) - 1
    if j < 0:
        raise ValueError("run shorter than one step")
    b = ell - j * delta
    perp = out - np.dot(out, u) * u
    if np.linalg.norm(perp) < 1e-12:
        perp = np.cross(u, [1.0, 0.0, 0.0] if abs(u[0]) < 0.9 else [0.0, 1.0, 0.0])
    perp = _unit(perp)
    mid = j // 2
    before = A + np.outer(np.arange(1, mid + 1) * delta, u)
    x0 = A + mid * delta * u
    apex = x0 + (b / 2) * u + math.sqrt(max(delta * delta - b * b / 4, 0.0)) * perp
    x1 = x0 + b * u
    after = x1 + np.outer(np.arange(1, j - mid + 1) * delta, u)
    pts = np.vstack([before, apex[None], x1[None], after])
    pts[-1] = B
    return pts


@dataclass
class CubeConstruction:
    graph: TripartiteGraph
    n: int
    delta: float
    delta_star: float
    sigma: float
    raw_points: np.ndarray  # (3n, 3) before flattening, rows ordered (a, i)
    points: np.ndarray  # (3n, 3) flattened
    labels: list  # (a, i) per row
    edge_segments: np.ndarray  # (3, 2, 3) flattened cube edges
    line_edges: list  # graph edge per line
    bases: np.ndarray  # (|L|, 3) flattened line bases (the class-a endpoint)
    dirs: np.ndarray
    face_normals: np.ndarray  # (3, 2, 3) unit normals of the flattened incident faces
    bisector_normals: np.ndarray  # (3, 3)
    offsets: np.ndarray  # (3, 3) in-plane unit offset of Q^a from the edge
    Q: np.ndarray  # (M, 3) closed loop, consecutive points delta apart
    Q_class: np.ndarray  # (M,) 1..3 for Q^a, 0 for joins
    pairs: np.ndarray  # (3n, 2) loop indices of the two Q points flanking each vertex
    m_grid: int
    gadget_cell: float
    ball_radius: float
    cylinder_radius: float

    def index(self, v) -> int:
        a, i = v
        return (a - 1) * self.n + (i - 1)

    @property
    def lines(self) -> list[Line]:
        return [Line(b, d) for b, d in zip(self.bases, self.dirs)]

    @property
    def gadget_height(self) -> float:
        return self.m_grid * self.gadget_cell

    def gadget_lines(self, j: int) -> list[Line]:
        return point_gadget(self.Q[j], self.m_grid, self.gadget_cell)

    def n_lines(self, gadgets: bool = True) -> int:
        return len(self.bases) + (len(self.Q) * self.m_grid**2 if gadgets else 0)

    def line_instance(self, gadgets: bool = True) -> LineInstance:
        lines = self.lines
        if gadgets:
            for j in range(len(self.Q)):
                lines += self.gadget_lines(j)
        return LineInstance(3, lines, list(range(len(lines))))

    def sidecar(self) -> dict:
        return {
            "construction": "cube",
            "n": self.n,
            "delta": self.delta,
            "delta_star": self.delta_star,
            "sigma": self.sigma,
            "Q_size": len(self.Q),
            "m_grid": self.m_grid,
            "gadget_cell": self.gadget_cell,
            "ball_radius": self.ball_radius,
            "cylinder_radius": self.cylinder_radius,
            "vertex_labels": [f"{a}.{i}" for a, i in self.labels],
            "vertex_points": self.points,
            "line_edges": [f"{u[0]}.{u[1]}-{v[0]}.{v[1]}" for u, v in self.line_edges],
            "Q": self.Q,
        }


def _flattened_planes():
    """Unit normals of the flattened incident faces, the bisector normals and offsets."""
    Ainv_T = np.linalg.inv(FLATTEN).T
    normals = np.zeros((3, 2, 3))
    for a in range(3):
        for f in range(2):
            normals[a, f] = _unit(Ainv_T @ FACE_NORMALS[a, f])
    centre = FLATTEN @ np.full(3, 0.5)
    bis = np.zeros((3, 3))
    offs = np.zeros((3, 3))
    for a in range(3):
        s, e = FLATTEN @ CUBE_EDGES[a, 0], FLATTEN @ CUBE_EDGES[a, 1]
        # outward normals sum to the normal of the bisector missing the cube
        h = _unit(normals[a, 0] + normals[a, 1])
        if np.dot(h, s - centre) < 0:
            h = -h
        bis[a] = h
        w = _unit(np.cross(h, _unit(e - s)))
        if np.dot(w, AXIS) < 0:
            w = -w
        offs[a] = w
    return normals, bis, offs


def _radial(p):
    r = p - np.dot(p, AXIS) * AXIS
    return _unit(r)


def _build_Q(n, delta, delta_star, offsets):
    """Closed loop of points delta apart, total length 10, containing each Q^a."""
    segs = []
    pairs = np.zeros((3 * n, 2), dtype=np.int64)
    runs = []
    for a in range(3):
        s = FLATTEN @ CUBE_EDGES[a, 0]
        e = FLATTEN @ CUBE_EDGES[a, 1]
        u = _unit(e - s)
        w = offsets[a]

        def base(t, s=s, u=u, w=w):
            return s + t * u + delta_star * w

        feet = [SIGMA * (n + i) / (3 * n) for i in range(1, n + 1)]
        k1 = math.floor((feet[0] - delta / 2) / delta)
        k2 = math.floor((SIGMA - feet[-1] - delta / 2) / delta)
        start = feet[0] - delta / 2 - k1 * delta
        pts = [base(start + t * delta) for t in range(k1 + 1)]
        local_pairs = []
        for i, t in enumerate(feet):
            if i > 0:
                run = _delta_run(pts[-1], base(t - delta / 2), delta, w)
                pts.extend(run)
            local_pairs.append(len(pts) - 1)
            pts.append(base(t + delta / 2))
        last = feet[-1] + delta / 2
        pts.extend(base(last + t * delta) for t in range(1, k2 + 1))
        segs.append(np.array(pts))
        runs.append(local_pairs)
    target = round(10 / delta)
    fixed = sum(len(q) - 1 for q in segs)
    ends = [segs[a][-1] for a in range(3)]
    starts = [segs[(a + 1) % 3][0] for a in range(3)]

    def join(a, ku, kd):
        E, B = ends[a], starts[a]
        up, dn = E + ku * delta * AXIS, B + kd * delta * AXIS
        out = _radial((up + dn) / 2)
        p1 = _delta_run(E, up, delta, _radial(E))
        p2 = _delta_run(up, dn, delta, out)
        p3 = _delta_run(dn, B, delta, _radial(B))
        return np.vstack([p1, p2, p3])

    def join_steps(a, ku, kd):
        E, B = ends[a], starts[a]
        top = np.linalg.norm((B + kd * delta * AXIS) - (E + ku * delta * AXIS))
        return ku + kd + _steps(top, delta)

    need = target - fixed
    k = max(2, (need // 3 - _steps(float(np.linalg.norm(starts[0] - ends[0])), delta)) // 2)
    ku, kd = [k] * 3, [k] * 3
    for it in range(200):
        diff = need - sum(join_steps(a, ku[a], kd[a]) for a in range(3))
        if diff == 0:
            break
        kd[it % 3] += diff
    else:
        raise RuntimeError("could not close the Q loop at the required length")
    loop, cls, offset = [], [], 0
    for a in range(3):
        q = segs[a]
        for i, li in enumerate(runs[a]):
            pairs[a * n + i] = (offset + li, offset + li + 1)
        loop.append(q)
        cls.append(np.full(len(q), a + 1))
        J = join(a, ku[a], kd[a])[:-1]  # last point is the next Q^a start
        loop.append(J)
        cls.append(np.zeros(len(J), dtype=np.int64))
        offset += len(q) + len(J)
    Q = np.vstack(loop)
    if len(Q) != target:
        raise RuntimeError(f"Q loop has {len(Q)} points, expected {target}")
    return Q, np.concatenate(cls).astype(np.int64), pairs


def gen_cube(graph: TripartiteGraph, m_grid: int = 4, ball_radius: float | None = None) -> CubeConstruction:
    """Flattened-cube line construction for a tripartite graph.

    Gadget balls default to radius delta/8 so they stay disjoint; the gadget
    grid has ``m_grid`` points per side with cell ball_radius/(2 m_grid).
    """
    if not isinstance(graph, TripartiteGraph):
        raise NotTripartiteError("expected a TripartiteGraph")
    if m_grid < 4:
        raise ValueError("m_grid must be at least 4")
    n = graph.n
    delta = 1.0 / (4000 * n)
    delta_star = math.sqrt(99.75) * delta
    labels = graph.vertices()
    raw = np.array([vertex_point(a, i, n) for a, i in labels])
    pts = raw @ FLATTEN.T
    seg = CUBE_EDGES @ FLATTEN.T
    idx = {v: k for k, v in enumerate(labels)}
    bases, dirs = [], []
    for u, v in graph.edges:
        p, q = pts[idx[u]], pts[idx[v]]
        bases.append(p)
        dirs.append(_unit(q - p))
    normals, bis, offs = _flattened_planes()
    Q, Qc, pairs = _build_Q(n, delta, delta_star, offs)
    if ball_radius is None:
        ball_radius = delta / 8
    cell = ball_radius / (2 * m_grid)
    return CubeConstruction(
        graph, n, delta, delta_star, SIGMA, raw, pts, labels, seg, list(graph.edges),
        np.array(bases).reshape(-1, 3), np.array(dirs).reshape(-1, 3),
        normals, bis, offs, Q, Qc, pairs, m_grid, cell, ball_radius, SIGMA / 2,
    )


def point_gadget(q, grid_side: int, scale: float) -> list[Line]:
    """Lines through q and every point of a grid_side x grid_side grid of cell ``scale``.

    The grid lies in the plane z = q_z + W with W = grid_side * scale and is
    centred above q, so it sits inside the ball B(q, 2W).
    """
    if grid_side < 2:
        raise ValueError("grid_side must be at least 2")
    q = np.asarray(q, dtype=float)
    W = grid_side * scale
    ticks = -W / 2 + scale / 2 + scale * np.arange(grid_side)
    out = []
    for x, y in itertools.product(ticks, ticks):
        out.append(Line.through(q, q + np.array([x, y, W])))
    return out


def gadget_ball_radius(grid_side: int, scale: float) -> float:
    return 2 * grid_side * scale


def completeness_tour_cube(c: CubeConstruction, cover) -> Tour:
    """The Q loop with a detour to each cover vertex between its two flanking Q points."""
    bad = c.graph.uncovered_edge(cover)
    if bad is not None:
        raise VertexCoverError(f"edge {bad[0]}-{bad[1]} is not covered")
    rows = sorted({c.index(tuple(v)) for v in cover})
    pos = c.pairs[rows, 0] + 1
    W = np.insert(c.Q, pos, c.points[rows], axis=0)
    return Tour(W)


def cube_tour_feasibility(c: CubeConstruction, tour: Tour, tol: float = 1e-9) -> dict:
    """Line-by-line feasibility: every graph line met by a segment, every gadget centre on the tour."""
    W = tour.waypoints
    missed = []
    worst = 0.0
    for k, (b, d) in enumerate(zip(c.bases, c.dirs)):
        dist = segments_line_distance(W, b, d)
        worst = max(worst, dist)
        if dist > tol:
            missed.append(c.line_edges[k])
    # every gadget line contains its q, so a tour through q meets all of them
    on_tour = {tuple(p) for p in W}
    gadgets_missed = [j for j, q in enumerate(c.Q) if tuple(q) not in on_tour]
    return {"lines_missed": missed, "gadgets_missed": gadgets_missed, "worst_line_distance": worst,
            "feasible": not missed and not gadgets_missed}


# -- cube verification ----------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    value: float
    bound: float
    margin: float
    detail: str = ""


def _nonincident_pairs(edges):
    I, J = [], []
    for x in range(len(edges)):
        for y in range(x + 1, len(edges)):
            if not set(edges[x]) & set(edges[y]):
                I.append(x)
                J.append(y)
    return np.array(I, dtype=np.int64), np.array(J, dtype=np.int64)


def _min_point_line(X, B, D, chunk: int = 65536):
    """Closest (point, line) pair via |w|^2 - (w.d)^2 in BLAS-sized chunks; the winner is recomputed directly."""
    if len(B) == 0:
        return math.inf, None
    ctr = X.mean(axis=0)
    Bc = B - ctr
    bd = np.einsum("ij,ij->j", Bc.T, D.T)
    bb = np.einsum("ij,ij->i", Bc, Bc)
    best, arg = math.inf, None
    for s in range(0, len(X), chunk):
        Xc = X[s:s + chunk] - ctr
        xx = np.einsum("ij,ij->i", Xc, Xc)
        wd = Xc @ D.T - bd
        ww = xx[:, None] - 2 * (Xc @ Bc.T) + bb
        d2 = ww - wd * wd
        i, k = np.unravel_index(np.argmin(d2), d2.shape)
        if d2[i, k] < best:
            best, arg = float(d2[i, k]), (s + int(i), int(k))
    j, k = arg
    exact = float(points_lines_distances(X[j][None], B[k][None], D[k][None])[0, 0])
    return exact, arg


def verify_cube(c: CubeConstruction) -> dict[str, Check]:
    """Numeric checks of the construction; failures are entries, never exceptions."""
    n, delta = c.n, c.delta
    out = {}
    I, J = _nonincident_pairs(c.line_edges)
    idx = {v: k for k, v in enumerate(c.labels)}
    rb = np.array([c.raw_points[idx[u]] for u, _ in c.line_edges]).reshape(-1, 3)
    rd = np.array([_unit(c.raw_points[idx[v]] - c.raw_points[idx[u]]) for u, v in c.line_edges]).reshape(-1, 3)
    for key, B, D, bound in (("a_skew_raw", rb, rd, 1 / (20 * n)), ("b_skew_flat", c.bases, c.dirs, 1 / (200 * n))):
        if len(I):
            dist = skew_distance_3d(B[I], D[I], B[J], D[J])
            k = int(np.argmin(dist))
            val = float(dist[k])
            detail = f"lines {c.line_edges[I[k]]} and {c.line_edges[J[k]]}"
        else:
            val, detail = math.inf, "no non-incident pairs"
        out[key] = Check(key, val >= bound, val, bound, val - bound, detail)
    P = c.points
    D = np.linalg.norm(P[:, None] - P[None], axis=2)
    D[np.diag_indices(len(P))] = np.inf
    val = float(D.min())
    bound = c.sigma / (3 * n)
    out["c_point_spacing"] = Check("c_point_spacing", abs(val - bound) <= 1e-9, val, bound, abs(val - bound),
                                   "minimum distance between flattened vertex points")
    angles = [plane_angle(c.face_normals[a, 0], -c.face_normals[a, 1]) for a in range(3)]
    worst = max(angles)
    out["d_plane_angle"] = Check("d_plane_angle", worst < 0.25, worst, 0.25, 0.25 - worst,
                                 "angles " + ", ".join(f"{x:.12f}" for x in angles))
    best, arg = _min_point_line(c.Q, c.bases, c.dirs)
    bound = 9.9 * delta
    detail = f"q {arg[0]} and line {c.line_edges[arg[1]]}" if arg else "no lines"
    out["e_q_line"] = Check("e_q_line", best > bound, best, bound, best - bound, detail)
    rad = np.linalg.norm(c.Q - np.outer(c.Q @ AXIS, AXIS), axis=1)
    val = float(rad.min())
    out["f_cylinder"] = Check("f_cylinder", val > c.cylinder_radius, val, c.cylinder_radius,
                              val - c.cylinder_radius, f"q {int(np.argmin(rad))}")
    steps = np.linalg.norm(np.roll(c.Q, -1, axis=0) - c.Q, axis=1)
    err = float(np.max(np.abs(steps - delta)))
    out["g_q_steps"] = Check("g_q_steps", err <= 1e-9, err, 1e-9, 1e-9 - err,
                             f"{len(c.Q)} points, loop length {steps.sum():.12f}")
    from scipy.spatial import cKDTree

    close = cKDTree(c.Q).query_pairs(delta * (1 - 1e-9))
    out["h_q_separation"] = Check("h_q_separation", not close, float(len(close)), 0.0, -float(len(close)),
                                  "pairs of Q points closer than delta")
    tri = 0.0
    for r, (i, j) in enumerate(c.pairs):
        p = c.points[r]
        tri = max(tri, abs(np.linalg.norm(c.Q[i] - p) - 10 * delta), abs(np.linalg.norm(c.Q[j] - p) - 10 * delta),
                  abs(np.linalg.norm(c.Q[i] - c.Q[j]) - delta))
    out["i_triangles"] = Check("i_triangles", tri <= 1e-9, tri, 1e-9, 1e-9 - tri, "10d, 10d, d triangles")
    sizes = [int(np.sum(c.Q_class == a)) for a in (1, 2, 3)]
    out["j_qa_size"] = Check("j_qa_size", max(sizes) <= 4000 * n, max(sizes), 4000 * n, 4000 * n - max(sizes),
                             f"sizes {sizes}")
    return out


# -- gap arithmetic ----------------------------------------------------------

def cube_gap(n: int = 1000) -> dict:
    """Tour lengths on the two sides of the vertex-cover gap, with delta = 1/(4000 n)."""
    delta = 1.0 / (4000 * n)
    yes = 10 + 19 * delta * (n / 2)
    no = 10 + 19 * delta * (34 / 33) * (n / 2) / 1.011
    return {"yes": yes, "no": no, "ratio": no / yes, "threshold": 1 + 1 / 230000}


def gadget_identity(n):
    """(40 n^3)^2 / (80 n^6) simplified symbolically."""
    import sympy as sp

    k = sp.Integer(n) if isinstance(n, int) else n
    return sp.simplify((40 * k**3) ** 2 * sp.Rational(1, 80) / k**6)


def highdim_ratio(eps: float) -> float:
    """Separation ratio between the two cases when delta = Delta = eps^2."""
    return (2 - eps) * (1 + eps**2) / ((1 - 2 * eps**2) * (1 - eps**2))


# -- the high-dimensional construction -------------------------------------------

@dataclass
class HighDimConstruction:
    graph: Graph
    alpha: int
    eps: float
    delta: float
    Delta: float
    lam: float
    d: int
    d_target: int
    method: str
    points: np.ndarray  # (alpha n, d); row v * alpha + i is copy i of v
    edges: list  # pairs of rows
    distortion: float = field(default=1.0)

    @property
    def n_prime(self) -> int:
        return len(self.points)

    def row(self, v: int, i: int) -> int:
        return v * self.alpha + i

    @property
    def bases(self) -> np.ndarray:
        return self.points[[u for u, _ in self.edges]].reshape(-1, self.d)

    @property
    def dirs(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((0, self.d))
        v = self.points[[w for _, w in self.edges]] - self.bases
        return v / np.linalg.norm(v, axis=1)[:, None]

    @property
    def lines(self) -> list[Line]:
        return [Line(b, d) for b, d in zip(self.bases, self.dirs)]

    def line_instance(self) -> LineInstance:
        return LineInstance(self.d, self.lines, list(range(len(self.edges))))

    def sidecar(self) -> dict:
        return {
            "construction": "highdim",
            "n": self.graph.n,
            "alpha": self.alpha,
            "eps": self.eps,
            "delta": self.delta,
            "Delta": self.Delta,
            "lambda": self.lam,
            "d": self.d,
            "d_target": self.d_target,
            "method": self.method,
            "distortion": self.distortion,
            "line_edges": [f"{u}-{w}" for u, w in self.edges],
        }


def _exact_pairwise(P):
    iu, ju = np.triu_indices(len(P), 1)
    return np.linalg.norm(P[iu] - P[ju], axis=1)


def _normalize_min(P):
    """Scale so the exact minimum pairwise distance is >= 1 and as close to 1 as floats allow."""
    dist = _exact_pairwise(P)
    if len(dist) == 0:
        return P
    P = P / dist.min()
    for _ in range(8):
        lo = _exact_pairwise(P).min()
        if lo >= 1.0:
            break
        P = P * (1.0 / lo) * (1 + 2**-52)
    return P


def _simplex(k: int, rng) -> np.ndarray:
    """k points of a regular unit simplex in R^(k-1), randomly rotated."""
    if k == 1:
        return np.zeros((1, 1))
    X = np.eye(k) - 1.0 / k
    # orthonormal basis of the sum-zero hyperplane
    Qm, _ = np.linalg.qr(np.vstack([np.ones(k), np.eye(k)[:-1]]).T)
    Y = X @ Qm[:, 1:] / math.sqrt(2)
    Rm, _ = np.linalg.qr(rng.standard_normal((k - 1, k - 1)))
    return Y @ Rm


def gen_highdim(g: Graph, eps: float, alpha: int | None = None, seed: int = 0, d: int | None = None,
                retries: int = 200) -> HighDimConstruction:
    """Lexicographic blow-up of g embedded with pairwise distances in [1, 1 + eps^2].

    The target dimension defaults to ceil(8 delta^-2 ln n'); when that is at
    least n' - 1 the exact regular simplex is used, otherwise a Gaussian
    projection of it, retried with fresh seeds until the distortion fits.
    """
    if not 0 < eps <= 0.1:
        raise ValueError("eps must lie in (0, 0.1]")
    if g.n < 1:
        raise ValueError("graph has no vertices")
    if alpha is None:
        alpha = g.n**2
    if alpha < 1:
        raise ValueError("alpha must be positive")
    delta = eps**2
    npr = alpha * g.n
    d_target = d if d is not None else max(1, math.ceil(8 * delta**-2 * math.log(max(npr, 2))))
    rng = np.random.default_rng(seed)
    edges = [(v * alpha + i, w * alpha + j) for v, w in g.edges for i in range(alpha) for j in range(alpha)]
    kw = dict(graph=g, alpha=alpha, eps=eps, delta=delta, Delta=delta, lam=1 - eps**2, d_target=d_target, edges=edges)
    if d_target >= npr - 1:
        P = _normalize_min(_simplex(npr, rng))
        if P.shape[1] < 2:  # lines need at least two coordinates
            P = np.hstack([P, np.zeros((npr, 2 - P.shape[1]))])
        dist = _exact_pairwise(P)
        dmax = float(dist.max()) if len(dist) else 1.0
        if dmax > 1 + delta:
            raise EmbeddingError(f"simplex distortion {dmax} exceeds 1 + {delta}")
        return HighDimConstruction(d=P.shape[1], method="simplex", points=P, distortion=dmax, **kw)
    S = _simplex(npr, rng)
    best = math.inf
    for _ in range(retries):
        Gm = rng.standard_normal((S.shape[1], d_target)) / math.sqrt(d_target)
        P = _normalize_min(S @ Gm)
        dmax = float(_exact_pairwise(P).max())
        best = min(best, dmax)
        if dmax <= 1 + delta:
            return HighDimConstruction(d=d_target, method="gaussian", points=P, distortion=dmax, **kw)
    raise EmbeddingError(f"no projection to d={d_target} within 1 + {delta} after {retries} tries; best {best}")


def completeness_tour_highdim(c: HighDimConstruction, cover) -> Tour:
    """Visit every copy of every cover vertex, in row order."""
    bad = c.graph.uncovered_edge(cover)
    if bad is not None:
        raise VertexCoverError(f"edge {bad[0]}-{bad[1]} is not covered")
    rows = [c.row(v, i) for v in sorted(set(int(x) for x in cover)) for i in range(c.alpha)]
    if not rows:
        rows = [0]
    return Tour(c.points[rows])


def highdim_tour_feasibility(c: HighDimConstruction, tour: Tour, tol: float = 1e-9) -> dict:
    missed = []
    worst = 0.0
    for e, b, d in zip(c.edges, c.bases, c.dirs):
        dist = segments_line_distance(tour.waypoints, b, d)
        worst = max(worst, dist)
        if dist > tol:
            missed.append(e)
    return {"lines_missed": missed, "worst_line_distance": worst, "feasible": not missed}


@dataclass
class Extraction:
    cover: set
    nonempty: np.ndarray  # bool per row
    uncovered_lines: int
    uncovered_bound: float


def extract_vc_highdim(c: HighDimConstruction, t: Tour) -> Extraction:
    """Vertices with at least lam * alpha copies whose Delta-ball the tour meets."""
    W = t.waypoints
    segs = list(zip(W, np.roll(W, -1, axis=0)))
    nonempty = np.array([
        any(segment_intersects_ball(a, b, p, c.Delta) for a, b in segs) for p in c.points
    ])
    cover = set()
    for v in range(c.graph.n):
        hit = int(nonempty[v * c.alpha:(v + 1) * c.alpha].sum())
        if hit >= c.lam * c.alpha:
            cover.add(v)
    unc = sum(1 for u, w in c.edges if not nonempty[u] and not nonempty[w])
    return Extraction(cover, nonempty, unc, 2 * tour_cost(t) / c.Delta)


def point_line_separation(c: HighDimConstruction, samples: int = 16, reach: float = 2.0, seed: int = 0) -> float:
    """Smallest dist(p, other line) / (Delta / 2) over sampled p on each line outside its endpoint balls.

    Samples come from the three stretches of the line outside both balls
    (before, between and beyond the endpoints), including the ball boundaries.
    """
    rng = np.random.default_rng(seed)
    B, D = c.bases, c.dirs
    if len(B) < 2:
        return math.inf
    eps = c.Delta * (1 + 1e-9)
    worst = math.inf
    for k, (u, w) in enumerate(c.edges):
        L = float(np.linalg.norm(c.points[w] - c.points[u]))
        ts = np.concatenate([
            [-eps, eps, L - eps, L + eps],
            rng.uniform(-reach, -eps, samples),
            rng.uniform(eps, L - eps, samples),
            rng.uniform(L + eps, L + reach, samples),
        ])
        P = B[k] + np.outer(ts, D[k])
        others = np.arange(len(B)) != k
        dist = points_lines_distances(P, B[others], D[others])
        worst = min(worst, float(dist.min()) / (c.Delta / 2))
    return worst
