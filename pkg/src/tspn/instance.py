"""Instance models, line discretization, flat lifting and the text file format."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import DimensionError, Line, Tour, as_point, closest_params, dist_point_line

MERGE_TOL = 1e-9
FORMAT_VERSION = 1


class InstanceFormatError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(message if lineno is None else f"line {lineno}: {message}")


@dataclass
class LineInstance:
    dim: int
    lines: list[Line]
    ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.ids:
            self.ids = list(range(len(self.lines)))
        if len(set(self.ids)) != len(self.ids) or len(self.ids) != len(self.lines):
            raise ValueError("line ids must be unique, one per line")
        for ln in self.lines:
            if ln.dim != self.dim:
                raise DimensionError(f"line of dimension {ln.dim} in a {self.dim}-d instance")

    @property
    def n(self) -> int:
        return len(self.lines)

    def __eq__(self, other):
        if not isinstance(other, LineInstance):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.ids == other.ids
            and all(
                np.array_equal(a.base, b.base) and np.array_equal(a.dir, b.dir)
                for a, b in zip(self.lines, other.lines)
            )
        )


class DiscreteInstance:
    """Neighborhoods given as finite point sets.

    Points are deduplicated across neighborhoods (within ``MERGE_TOL``); the union
    ``points`` has size N and ``members[j]`` lists the neighborhoods containing
    point j.
    """

    def __init__(self, groups, dim: int | None = None):
        groups = [np.atleast_2d(np.asarray(g, dtype=float)) for g in groups]
        if not groups:
            raise ValueError("an instance needs at least one neighborhood")
        for i, g in enumerate(groups):
            if g.size == 0:
                raise ValueError(f"empty group {i}")
        if dim is None:
            dim = groups[0].shape[1]
        for g in groups:
            if g.shape[1] != dim:
                raise DimensionError(f"expected dimension {dim}, got {g.shape[1]}")
            if not np.all(np.isfinite(g)):
                raise ValueError("coordinates must be finite")
        self.dim = dim
        self.groups = groups
        pts: list[np.ndarray] = []
        members: list[set[int]] = []
        self.group_index: list[list[int]] = []
        for i, g in enumerate(groups):
            idx = []
            for p in g:
                j = _find(pts, p)
                if j is None:
                    pts.append(p.copy())
                    members.append(set())
                    j = len(pts) - 1
                members[j].add(i)
                if j not in idx:
                    idx.append(j)
            self.group_index.append(idx)
        self.points = np.array(pts)
        self.members = [frozenset(m) for m in members]

    @property
    def n(self) -> int:
        return len(self.groups)

    @property
    def N(self) -> int:
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, DiscreteInstance):
            return NotImplemented
        return self.dim == other.dim and len(self.groups) == len(other.groups) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.groups, other.groups)
        )

    def is_feasible(self, tour: Tour, tol: float = 1e-9) -> bool:
        return not self.uncovered(tour, tol)

    def uncovered(self, tour: Tour, tol: float = 1e-9) -> list[int]:
        w = tour.waypoints
        out = []
        for i, g in enumerate(self.groups):
            d = np.linalg.norm(w[:, None, :] - g[None, :, :], axis=2)
            if d.min() > tol:
                out.append(i)
        return out


def _find(pts, p):
    for j, q in enumerate(pts):
        if np.max(np.abs(q - p)) <= MERGE_TOL:
            return j
    return None


@dataclass
class Flat:
    base: np.ndarray
    basis: np.ndarray  # k x d, orthonormal rows

    def __post_init__(self):
        self.base = as_point(self.base)
        self.basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        if self.basis.shape[1] != self.base.size:
            raise DimensionError("basis rows must match the base dimension")
        gram = self.basis @ self.basis.T
        if np.max(np.abs(gram - np.eye(len(self.basis)))) > 1e-9:
            raise ValueError("flat basis must be orthonormal")

    @property
    def k(self) -> int:
        return len(self.basis)

    def distance(self, p) -> float:
        w = np.asarray(p, float) - self.base
        return float(np.linalg.norm(w - self.basis.T @ (self.basis @ w)))


@dataclass
class FlatInstance:
    dim: int
    flats: list[Flat]

    def __post_init__(self):
        for f in self.flats:
            if f.base.size != self.dim:
                raise DimensionError("flat dimension mismatch")
            if not 1 <= f.k <= self.dim - 2:
                raise ValueError(f"flat dimension {f.k} outside 1..{self.dim - 2}")

    def is_feasible(self, tour: Tour, tol: float = 1e-9) -> bool:
        return all(tour_touches(tour, f.distance, tol) for f in self.flats)


def tour_touches(tour: Tour, distance, tol: float = 1e-9) -> bool:
    """Whether some segment of ``tour`` comes within ``tol`` of an affine set.

    ``distance`` maps a point to its distance from the set; distance to an affine
    set is convex along a segment so a ternary search per segment is exact.
    """
    w = tour.waypoints
    if any(distance(p) <= tol for p in w):
        return True
    for a, b in tour.segments():
        lo, hi = 0.0, 1.0
        for _ in range(100):
            m1 = lo + (hi - lo) / 3
            m2 = hi - (hi - lo) / 3
            if distance(a + m1 * (b - a)) <= distance(a + m2 * (b - a)):
                hi = m2
            else:
                lo = m1
        if distance(a + 0.5 * (lo + hi) * (b - a)) <= tol:
            return True
    return False


def line_tour_feasible(inst: LineInstance, tour: Tour, tol: float = 1e-6) -> bool:
    return all(tour_touches(tour, lambda p, ln=ln: dist_point_line(p, ln), tol) for ln in inst.lines)


class Scheme(enum.Enum):
    CLOSEST_PAIRS = "closest_pairs"


def discretize_lines(inst: LineInstance, scheme: Scheme = Scheme.CLOSEST_PAIRS) -> DiscreteInstance:
    """Candidate points on each line; one neighborhood per line.

    For every ordered pair (i, j) the point of line i closest to line j, plus the
    point of each line closest to the centroid of all those points.
    """
    if inst.n < 2:
        raise ValueError("degenerate instance: discretization needs at least 2 lines")
    if scheme is not Scheme.CLOSEST_PAIRS:
        raise ValueError(f"unknown scheme {scheme}")
    cand: list[list[np.ndarray]] = [[] for _ in inst.lines]
    for i, li in enumerate(inst.lines):
        for j, lj in enumerate(inst.lines):
            if i == j:
                continue
            s, _ = closest_params(li, lj)
            cand[i].append(li.point_at(s))
    centroid = np.mean([p for c in cand for p in c], axis=0)
    for i, li in enumerate(inst.lines):
        cand[i].append(li.project(centroid))
    groups = []
    for c in cand:
        uniq: list[np.ndarray] = []
        for p in c:
            if _find(uniq, p) is None:
                uniq.append(p)
        groups.append(np.array(uniq))
    # intersecting lines yield the same point from both sides up to rounding;
    # snap those so the merged point is shared
    flat = [p for g in groups for p in g]
    for g in groups:
        for k, p in enumerate(g):
            for q in flat:
                if 0 < np.max(np.abs(q - p)) <= 1e-9:
                    g[k] = q
    return DiscreteInstance(groups, inst.dim)


def lift_to_flats(inst: LineInstance, k: int, d: int) -> FlatInstance:
    if inst.dim != 3:
        raise DimensionError("lifting starts from lines in 3 dimensions")
    if k < 1 or d < k + 2:
        raise ValueError(f"need 1 <= k <= d - 2, got k={k}, d={d}")
    flats = []
    for ln in inst.lines:
        base = np.zeros(d)
        base[:3] = ln.base
        basis = np.zeros((k, d))
        basis[0, :3] = ln.dir
        for extra in range(1, k):
            basis[extra, 2 + extra] = 1.0
        flats.append(Flat(base, basis))
    return FlatInstance(d, flats)


def project_tour(t: Tour, to_dim: int) -> Tour:
    if to_dim > t.dim:
        raise DimensionError(f"cannot project a {t.dim}-d tour to {to_dim} dimensions")
    return Tour(t.waypoints[:, :to_dim].copy(), None if t.meta is None else list(t.meta))


# -- text format ------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_instance(inst, path) -> None:
    out = []
    if isinstance(inst, LineInstance):
        out += [f"TSPN LINES {FORMAT_VERSION}", f"dim {inst.dim}"]
        for lid, ln in zip(inst.ids, inst.lines):
            out.append(" ".join(["line", str(lid), *map(_fmt, ln.base), *map(_fmt, ln.dir)]))
    elif isinstance(inst, DiscreteInstance):
        out += [f"TSPN DISCRETE {FORMAT_VERSION}", f"dim {inst.dim}"]
        for i, g in enumerate(inst.groups):
            out.append(f"group {i} {len(g)}")
            out += [" ".join(map(_fmt, p)) for p in g]
    elif isinstance(inst, FlatInstance):
        out += [f"TSPN FLATS {FORMAT_VERSION}", f"dim {inst.dim}"]
        for i, f in enumerate(inst.flats):
            out.append(f"flat {i} {f.k}")
            out.append(" ".join(map(_fmt, f.base)))
            out += [" ".join(map(_fmt, row)) for row in f.basis]
    else:
        raise TypeError(f"cannot write {type(inst).__name__}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def _tokens(path):
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        if text:
            yield lineno, text.split()


def _floats(tokens, lineno, count):
    if len(tokens) != count:
        raise InstanceFormatError(f"wrong dimension: expected {count} values, got {len(tokens)}", lineno)
    try:
        vals = [float(t) for t in tokens]
    except ValueError as exc:
        raise InstanceFormatError(f"non-numeric token ({exc})", lineno) from None
    return vals


def read_instance(path):
    rows = list(_tokens(path))
    if not rows:
        raise InstanceFormatError("malformed header: empty file", 1)
    lineno, head = rows[0]
    if len(head) != 3 or head[0] != "TSPN" or head[1] not in ("LINES", "DISCRETE", "FLATS"):
        raise InstanceFormatError("malformed header", lineno)
    if head[2] != str(FORMAT_VERSION):
        raise InstanceFormatError(f"unsupported version {head[2]}", lineno)
    kind = head[1]
    if len(rows) < 2 or rows[1][1][0] != "dim" or len(rows[1][1]) != 2:
        raise InstanceFormatError("malformed header: missing dim", rows[1][0] if len(rows) > 1 else lineno)
    try:
        dim = int(rows[1][1][1])
    except ValueError:
        raise InstanceFormatError("non-numeric token in dim", rows[1][0]) from None
    if dim < 2:
        raise InstanceFormatError("wrong dimension: dim must be at least 2", rows[1][0])
    body = rows[2:]
    pos = 0
    if kind == "LINES":
        lines, ids = [], []
        for lineno, tok in body:
            if tok[0] != "line" or len(tok) < 2:
                raise InstanceFormatError(f"expected 'line', got {tok[0]!r}", lineno)
            try:
                ids.append(int(tok[1]))
            except ValueError:
                raise InstanceFormatError("non-numeric token in line id", lineno) from None
            vals = _floats(tok[2:], lineno, 2 * dim)
            try:
                lines.append(Line(vals[:dim], vals[dim:]))
            except ValueError as exc:
                raise InstanceFormatError(str(exc), lineno) from None
        return LineInstance(dim, lines, ids)
    if kind == "DISCRETE":
        groups = []
        while pos < len(body):
            lineno, tok = body[pos]
            if tok[0] != "group" or len(tok) != 3:
                raise InstanceFormatError(f"expected 'group <i> <count>', got {' '.join(tok)!r}", lineno)
            try:
                count = int(tok[2])
            except ValueError:
                raise InstanceFormatError("non-numeric token in group count", lineno) from None
            if count <= 0:
                raise InstanceFormatError("empty group", lineno)
            pts = []
            for k in range(count):
                if pos + 1 + k >= len(body):
                    raise InstanceFormatError("group truncated", lineno)
                ln2, t2 = body[pos + 1 + k]
                pts.append(_floats(t2, ln2, dim))
            groups.append(pts)
            pos += count + 1
        if not groups:
            raise InstanceFormatError("no groups", rows[-1][0])
        return DiscreteInstance(groups, dim)
    flats = []
    while pos < len(body):
        lineno, tok = body[pos]
        if tok[0] != "flat" or len(tok) != 3:
            raise InstanceFormatError(f"expected 'flat <id> <k>', got {' '.join(tok)!r}", lineno)
        try:
            k = int(tok[2])
        except ValueError:
            raise InstanceFormatError("non-numeric token in flat k", lineno) from None
        if pos + 1 + k >= len(body):
            raise InstanceFormatError("flat truncated", lineno)
        base = _floats(body[pos + 1][1], body[pos + 1][0], dim)
        basis = [_floats(body[pos + 2 + j][1], body[pos + 2 + j][0], dim) for j in range(k)]
        try:
            flats.append(Flat(base, basis))
        except ValueError as exc:
            raise InstanceFormatError(str(exc), lineno) from None
        pos += 2 + k
    return FlatInstance(dim, flats)


def write_tour(t: Tour, path) -> None:
    out = ["TOUR 1", f"dim {t.dim}"]
    out += [" ".join(map(_fmt, p)) for p in t.waypoints]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_tour(path) -> Tour:
    rows = list(_tokens(path))
    if not rows or rows[0][1] != ["TOUR", "1"]:
        raise InstanceFormatError("malformed tour header", rows[0][0] if rows else 1)
    if len(rows) < 2 or rows[1][1][0] != "dim":
        raise InstanceFormatError("missing dim", rows[0][0])
    dim = int(rows[1][1][1])
    pts = [_floats(tok, ln, dim) for ln, tok in rows[2:]]
    if not pts:
        raise InstanceFormatError("tour without waypoints", rows[1][0])
    return Tour(np.array(pts))


def write_sidecar(path, items: dict) -> None:
    lines = []
    for k, v in items.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(_fmt(x) if isinstance(x, (float, np.floating)) else str(x) for x in np.ravel(v))
        elif isinstance(v, (float, np.floating)):
            v = _fmt(v)
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_sidecar(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise InstanceFormatError("expected 'key = value'", lineno)
        k, v = text.split("=", 1)
        out[k.strip()] = v.strip()
    return out
