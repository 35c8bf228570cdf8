"""Perturbation with (v0, R) guessing, shifted quadtrees, portals and leaf multipaths."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .instance import DiscreteInstance

INF = float("inf")


# -- guessing ---------------------------------------------------------------

@dataclass
class GuessContext:
    v0_index: int
    v0: np.ndarray
    R0: float
    R: float
    retained: np.ndarray  # indices into inst.points

    @property
    def L0(self) -> float:
        return self.R / 2


def powers_of_two_between(lo: float, hi: float) -> list[float]:
    if lo <= 0:
        return []
    e = math.ceil(math.log2(lo))
    if 2.0**e < lo:
        e += 1
    while 2.0 ** (e - 1) >= lo:
        e -= 1
    out = []
    while 2.0**e <= hi * (1 + 1e-12):
        out.append(2.0**e)
        e += 1
    return out


def guess_radius(inst: DiscreteInstance, j: int) -> float:
    v0 = inst.points[j]
    return max(float(np.min(np.linalg.norm(g - v0, axis=1))) for g in inst.groups)


def enumerate_guesses(inst: DiscreteInstance) -> list[GuessContext]:
    """One context per guessed tour vertex v0 and power-of-2 radius R in [R0, 4 n R0]."""
    out = []
    for j, v0 in enumerate(inst.points):
        R0 = guess_radius(inst, j)
        dist = np.linalg.norm(inst.points - v0, axis=1)
        if R0 == 0.0:
            out.append(GuessContext(j, v0.copy(), 0.0, 0.0, np.flatnonzero(dist == 0.0)))
            continue
        for R in powers_of_two_between(R0, 4 * inst.n * R0):
            keep = np.flatnonzero(dist <= R * (1 + 1e-12))
            covered = set().union(*(inst.members[p] for p in keep))
            if len(covered) == inst.n:
                out.append(GuessContext(j, v0.copy(), R0, R, keep))
    return out


# -- perturbation -----------------------------------------------------------

@dataclass
class PerturbedInstance:
    points: np.ndarray  # (M, d) int64 grid coordinates, multiples of 8
    members: list[frozenset]  # neighborhoods per merged point
    origin: list[list[int]]  # original point indices per merged point
    g: float
    L: int
    v0: np.ndarray
    offset: np.ndarray  # integer offset added before the min-shift

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def unit(self) -> float:
        """Length of one grid unit in original coordinates."""
        return self.g / 8

    def to_original(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.v0 + (x + self.offset) * self.unit


def perturb(inst: DiscreteInstance, ctx: GuessContext) -> PerturbedInstance:
    """Snap retained points to pitch g = L0/(8N), scale so distinct points are >= 8 apart."""
    pts = inst.points[ctx.retained]
    n_ret = len(pts)
    g = ctx.L0 / (8 * n_ret) if ctx.R > 0 else 1.0
    raw = 8 * np.rint((pts - ctx.v0) / g).astype(np.int64)
    offset = raw.min(axis=0)
    grid = raw - offset
    index: dict[tuple, int] = {}
    merged, members, origin = [], [], []
    for k, row in enumerate(grid):
        key = tuple(int(v) for v in row)
        j = index.get(key)
        if j is None:
            j = index[key] = len(merged)
            merged.append(row)
            members.append(set())
            origin.append([])
        members[j] |= inst.members[ctx.retained[k]]
        origin[j].append(int(ctx.retained[k]))
    merged = np.array(merged, dtype=np.int64)
    L = 1 << int(merged.max()).bit_length()
    return PerturbedInstance(merged, [frozenset(m) for m in members], origin, g, L, ctx.v0.copy(), offset)


# -- quadtree ---------------------------------------------------------------

@dataclass
class QuadCell:
    lo: np.ndarray
    side: int
    level: int
    parent: int | None
    points: list[int]
    children: list[int] = field(default_factory=list)

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.side

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class ShiftedQuadtree:
    pi: PerturbedInstance
    shift: np.ndarray
    cells: list[QuadCell]

    @property
    def height(self) -> int:
        return max(c.level for c in self.cells)

    def leaves(self) -> list[int]:
        return [i for i, c in enumerate(self.cells) if c.is_leaf]

    def leaf_of(self, j: int) -> int:
        for i, c in enumerate(self.cells):
            if c.is_leaf and j in c.points:
                return i
        raise KeyError(j)


def random_shift(L: int, d: int, rng) -> np.ndarray:
    return rng.integers(0, L, size=d, dtype=np.int64)


def build_quadtree(pi: PerturbedInstance, a) -> ShiftedQuadtree:
    """2^d-ary dissection of the box [-a, 2L - a); cells with <= 1 point are leaves."""
    a = np.asarray(a, dtype=np.int64).reshape(-1)
    if a.size != pi.dim or np.any(a < 0) or np.any(a >= pi.L):
        raise ValueError(f"shift must lie in [0, {pi.L})^{pi.dim}")
    cells = [QuadCell(-a, 2 * pi.L, 0, None, list(range(len(pi.points))))]
    stack = [0]
    d = pi.dim
    while stack:
        ci = stack.pop()
        c = cells[ci]
        if len(c.points) <= 1 or c.side == 1:
            continue
        half = c.side // 2
        for bits in itertools.product((0, 1), repeat=d):
            lo = c.lo + half * np.array(bits, dtype=np.int64)
            inside = [j for j in c.points if np.all(pi.points[j] >= lo) and np.all(pi.points[j] < lo + half)]
            cells.append(QuadCell(lo, half, c.level + 1, ci, inside))
            c.children.append(len(cells) - 1)
            stack.append(len(cells) - 1)
    return ShiftedQuadtree(pi, a, cells)


# -- portals ----------------------------------------------------------------

def portal_k(m: int, d: int) -> int:
    """Per-axis grid count k with m = k^(d-1); k + 1 must be a power of 2 so grids nest."""
    if m < 1:
        raise ValueError("m must be positive")
    if d == 2:
        k = m
    else:
        k = round(m ** (1.0 / (d - 1)))
        if k ** (d - 1) != m:
            raise ValueError(f"m={m} is not a perfect (d-1)-th power for d={d}")
    if (k + 1) & k:
        raise ValueError(f"portal grid {k} per axis: k + 1 must be a power of 2")
    return k


def box_portals(lo, hi, k: int) -> list[tuple]:
    """Boundary points of the lattice dividing each side of the box into k + 1 parts.

    Contains the corners and a k^(d-1) grid inside every facet, plus the grid
    points on lower-dimensional faces so nested boxes share portals exactly.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = [[lo[j] + (hi[j] - lo[j]) * t / (k + 1) for t in range(k + 2)] for j in range(lo.size)]
    out = []
    for p in itertools.product(*axes):
        if any(p[j] == lo[j] or p[j] == hi[j] for j in range(lo.size)):
            out.append(tuple(float(v) for v in p))
    return out


def facet_portals(lo, hi, axis: int, value: float, k: int) -> list[tuple]:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = [
        [value] if j == axis else [lo[j] + (hi[j] - lo[j]) * t / (k + 1) for t in range(k + 2)]
        for j in range(lo.size)
    ]
    return [tuple(float(v) for v in p) for p in itertools.product(*axes)]


def portals(cell: QuadCell, m: int) -> list[tuple]:
    d = cell.lo.size
    return box_portals(cell.lo, cell.hi, portal_k(m, d))


# -- leaf multipaths --------------------------------------------------------

CYCLE = "CYCLE"
NOTHING = ()


def solve_leaf(state, point=None, visit: bool = False):
    """Optimal multipath inside a leaf box.

    Returns (cost, polylines) where polylines[i] is the vertex list of pair i.
    With ``visit`` the point is spliced into the pair whose detour is cheapest
    (first such pair on ties). Infeasible combinations cost ``inf``.
    """
    if visit and point is None:
        raise ValueError("visit bit set on a cell without a point")
    if state == CYCLE:
        if visit:
            return 0.0, [[tuple(point)]]
        return INF, []
    pairs = list(state)
    if not pairs:
        return (INF, []) if visit else (0.0, [])
    lens = [math.dist(u, v) for u, v in pairs]
    polys = [[u, v] for u, v in pairs]
    cost = sum(lens)
    if not visit:
        return cost, polys
    p = tuple(float(x) for x in point)
    best, bi = INF, -1
    for i, (u, v) in enumerate(pairs):
        extra = math.dist(u, p) + math.dist(p, v) - lens[i]
        if extra < best:
            best, bi = extra, i
    polys[bi] = [pairs[bi][0], p, pairs[bi][1]]
    return cost + best, polys
