"""Euclidean primitives: points, lines, distances, the flattening map and tour cost."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PARALLEL_TOL = 1e-12
FLATTEN = np.eye(3) - 0.3 * np.ones((3, 3))


class DimensionError(ValueError):
    pass


def as_point(p, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.size < 2:
        raise DimensionError(f"points need at least 2 coordinates, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    if dim is not None and arr.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {arr.size}")
    return arr


def _canonical_dir(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > PARALLEL_TOL)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v


@dataclass(frozen=True, eq=False)
class Line:
    """Line through ``base`` with unit direction ``dir``.

    The direction is normalized and flipped so its first nonzero coordinate
    is positive.
    """

    base: np.ndarray
    dir: np.ndarray

    def __post_init__(self):
        base = as_point(self.base)
        d = np.asarray(self.dir, dtype=float).reshape(-1)
        if d.size != base.size:
            raise DimensionError("base and direction dimensions differ")
        norm = np.linalg.norm(d)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("line direction must be a nonzero finite vector")
        object.__setattr__(self, "base", base)
        if abs(norm - 1.0) > 1e-15:
            d = d / norm
        object.__setattr__(self, "dir", _canonical_dir(d))

    @classmethod
    def through(cls, p, q) -> "Line":
        p = as_point(p)
        return cls(p, as_point(q, p.size) - p)

    @property
    def dim(self) -> int:
        return self.base.size

    def point_at(self, t: float) -> np.ndarray:
        return self.base + t * self.dir

    def project(self, p) -> np.ndarray:
        """Closest point of the line to ``p``."""
        p = as_point(p, self.dim)
        return self.base + np.dot(p - self.base, self.dir) * self.dir

    def canonical(self) -> tuple:
        foot = self.base - np.dot(self.base, self.dir) * self.dir
        return tuple(np.round(foot, 12)) + tuple(np.round(self.dir, 12))

    def __eq__(self, other):
        if not isinstance(other, Line):
            return NotImplemented
        return self.dim == other.dim and self.canonical() == other.canonical()

    def __hash__(self):
        return hash(self.canonical())

    def __repr__(self):
        return f"Line(base={self.base.tolist()}, dir={self.dir.tolist()})"


def dist_point_line(p, line: Line) -> float:
    p = as_point(p)
    if p.size != line.dim:
        raise DimensionError(f"point has dimension {p.size}, line has {line.dim}")
    w = p - line.base
    perp = w - np.dot(w, line.dir) * line.dir
    return float(np.linalg.norm(perp))


def points_lines_distances(points: np.ndarray, bases: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """All point-to-line distances, shape (len(points), len(bases))."""
    points = np.atleast_2d(points)
    w = points[:, None, :] - bases[None, :, :]
    along = np.einsum("pld,ld->pl", w, dirs)
    perp = w - along[..., None] * dirs[None, :, :]
    return np.linalg.norm(perp, axis=2)


def _sin2(u, v, b=None) -> float:
    # squared sine of the angle, computed without the 1 - cos^2 cancellation
    if b is None:
        b = float(np.dot(u, v))
    r = v - b * u
    return float(np.dot(r, r))


def closest_params(l1: Line, l2: Line) -> tuple[float, float]:
    """Parameters (s, t) minimizing |l1(s) - l2(t)|.

    For parallel lines s = 0 and t is the projection of l1.base onto l2.
    """
    if l1.dim != l2.dim:
        raise DimensionError("lines live in different dimensions")
    w = l1.base - l2.base
    b = float(np.dot(l1.dir, l2.dir))
    den = _sin2(l1.dir, l2.dir, b)
    if den <= PARALLEL_TOL**2:
        return 0.0, float(np.dot(w, l2.dir))
    d = float(np.dot(l1.dir, w))
    e = float(np.dot(l2.dir, w))
    s = (b * e - d) / den
    t = (e - b * d) / den
    return s, t


def dist_line_line(l1: Line, l2: Line) -> float:
    if l1.dim != l2.dim:
        raise DimensionError("lines live in different dimensions")
    if _sin2(l1.dir, l2.dir) <= PARALLEL_TOL**2:
        return dist_point_line(l1.base, l2)
    if l1.dim == 3:
        n = np.cross(l1.dir, l2.dir)
        return float(abs(np.dot(l2.base - l1.base, n)) / np.linalg.norm(n))
    s, t = closest_params(l1, l2)
    return float(np.linalg.norm(l1.point_at(s) - l2.point_at(t)))


def skew_distance_3d(b1, d1, b2, d2) -> np.ndarray:
    """Vectorized cross-product distance for arrays of 3-D lines (non-parallel)."""
    n = np.cross(d1, d2)
    nn = np.linalg.norm(n, axis=-1)
    out = np.abs(np.einsum("...i,...i->...", b2 - b1, n))
    par = nn < 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(par, 0.0, out / np.where(par, 1.0, nn))
    if np.any(par):
        w = (b2 - b1)[par]
        u = d1[par] if d1.ndim > 1 else np.broadcast_to(d1, w.shape)
        perp = w - np.einsum("...i,...i->...", w, u)[..., None] * u
        out = out.copy()
        out[par] = np.linalg.norm(perp, axis=-1)
    return out


def flatten(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise DimensionError("flattening is defined in three dimensions")
    return p @ FLATTEN.T


def plane_angle(n1, n2) -> float:
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    for n in (n1, n2):
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normals must be unit vectors")
    return float(np.arccos(np.clip(np.dot(n1, n2), -1.0, 1.0)))


def plane_normal(p0, p1, p2) -> np.ndarray:
    n = np.cross(np.asarray(p1, float) - p0, np.asarray(p2, float) - p0)
    return n / np.linalg.norm(n)


def segment_point_distance(a, b, p) -> float:
    a, b, p = (np.asarray(x, float) for x in (a, b, p))
    ab = b - a
    den = float(np.dot(ab, ab))
    if den == 0.0:
        return float(np.linalg.norm(p - a))
    t = min(1.0, max(0.0, float(np.dot(p - a, ab)) / den))
    return float(np.linalg.norm(a + t * ab - p))


def segment_intersects_ball(a, b, center, radius: float, guard: float = 1e-12) -> bool:
    """Whether segment ab meets the closed ball, by solving |a + t(b-a) - c|^2 = r^2."""
    a, b, c = (np.asarray(x, float) for x in (a, b, center))
    u = b - a
    w = a - c
    qa = float(np.dot(u, u))
    qb = 2.0 * float(np.dot(u, w))
    qc = float(np.dot(w, w)) - radius * radius
    if qc <= guard:
        return True
    if qa <= guard:
        return False
    disc = qb * qb - 4.0 * qa * qc
    if disc < -guard:
        return False
    root = np.sqrt(max(disc, 0.0))
    t1 = (-qb - root) / (2.0 * qa)
    t2 = (-qb + root) / (2.0 * qa)
    return t1 <= 1.0 + guard and t2 >= -guard


@dataclass
class Tour:
    """Closed polygonal tour; ``meta`` optionally annotates each waypoint."""

    waypoints: np.ndarray
    meta: list | None = field(default=None)

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float)
        if w.ndim == 1:
            w = w.reshape(1, -1)
        if w.shape[0] == 0:
            raise ValueError("a tour needs at least one waypoint")
        self.waypoints = w
        if self.meta is not None and len(self.meta) != len(w):
            raise ValueError("meta must annotate every waypoint")

    def __len__(self):
        return len(self.waypoints)

    @property
    def dim(self) -> int:
        return self.waypoints.shape[1]

    def cost(self) -> float:
        return tour_cost(self)

    def segments(self):
        w = self.waypoints
        return zip(w, np.roll(w, -1, axis=0))


def tour_cost(t: Tour) -> float:
    if t is None or len(t.waypoints) == 0:
        raise ValueError("empty tour")
    w = t.waypoints
    if len(w) == 1:
        return 0.0
    return float(np.linalg.norm(np.roll(w, -1, axis=0) - w, axis=1).sum())


def path_cost(points) -> float:
    pts = np.asarray(points, float)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def segments_line_distance(waypoints, base, direction, closed: bool = True) -> float:
    """Minimum distance from a polygonal chain to a line (unit ``direction``), vectorized."""
    W = np.atleast_2d(np.asarray(waypoints, dtype=float))
    u = np.asarray(direction, dtype=float)
    B = np.roll(W, -1, axis=0) if closed else W[1:]
    A = W if closed else W[:-1]
    if len(A) == 0:
        A, B = W, W
    a = A - base
    a = a - (a @ u)[:, None] * u
    v = B - A
    v = v - (v @ u)[:, None] * u
    vv = np.einsum("ij,ij->i", v, v)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(vv > 0, -np.einsum("ij,ij->i", a, v) / np.where(vv > 0, vv, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return float(np.min(np.linalg.norm(a + t[:, None] * v, axis=1)))
