"""Exact references for small instances: group Held-Karp and line touring."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Line, Tour, dist_point_line, tour_cost
from .instance import DiscreteInstance, LineInstance


class OracleCapError(ValueError):
    pass


@dataclass
class OracleResult:
    tour: Tour
    cost: float
    method: str
    optimality: str  # "exact" | "converged"


def held_karp_groups(inst: DiscreteInstance, max_groups: int = 14, max_points: int = 64) -> OracleResult:
    """Cheapest closed tour through one point of every group.

    Subset DP over (covered-group mask, last point), started from each point of
    group 0 and closed back to it.
    """
    n, N = inst.n, inst.N
    if n > max_groups or N > max_points:
        raise OracleCapError(f"instance too large for Held-Karp (n={n}, N={N})")
    P = inst.points
    D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    memb = np.array([sum(1 << i for i in m) for m in inst.members], dtype=np.int64)
    full = (1 << n) - 1
    best_cost, best_tour = math.inf, None
    for s in inst.group_index[0]:
        if memb[s] == full:
            return OracleResult(Tour(P[[s]]), 0.0, "held-karp", "exact")
        dp = np.full((1 << n, N), math.inf)
        par = np.full((1 << n, N), -1, dtype=np.int64)
        pmask = np.full((1 << n, N), -1, dtype=np.int64)
        dp[memb[s], s] = 0.0
        for mask in range(1 << n):
            row = dp[mask]
            live = np.isfinite(row)
            if not live.any() or mask == full:
                continue
            useful = (memb & ~mask) != 0
            if not useful.any():
                continue
            cand = row[live][:, None] + D[live][:, useful]
            arg = np.argmin(cand, axis=0)
            val = cand[arg, np.arange(cand.shape[1])]
            ks = np.flatnonzero(useful)
            js = np.flatnonzero(live)[arg]
            new = mask | memb[ks]
            for k, nm, v, j in zip(ks, new, val, js):
                if v < dp[nm, k]:
                    dp[nm, k] = v
                    par[nm, k] = j
                    pmask[nm, k] = mask
        close = dp[full] + D[:, s]
        k = int(np.argmin(close))
        if close[k] < best_cost:
            path, mask = [], full
            while k != s or mask != memb[s]:
                path.append(k)
                mask, k = int(pmask[mask, k]), int(par[mask, k])
            path.append(s)
            best_cost, best_tour = float(close.min()), P[path[::-1]]
    tour = Tour(best_tour)
    if not inst.is_feasible(tour):
        raise AssertionError("Held-Karp produced an infeasible tour")
    return OracleResult(tour, tour_cost(tour), "held-karp", "exact")


def brute_force_groups(inst: DiscreteInstance) -> float:
    """Minimum over point choices and orders; factorial time, for cross-checks."""
    best = math.inf
    for choice in itertools.product(*inst.groups):
        pts = np.array(choice)
        for perm in itertools.permutations(range(1, len(pts))):
            best = min(best, tour_cost(Tour(pts[[0, *perm]])))
    return best


# -- lines ------------------------------------------------------------------

def _golden(f, lo, hi, tol):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2


def _cyclic_cost(X):
    return float(np.linalg.norm(np.roll(X, -1, axis=0) - X, axis=1).sum())


def _socp_polish(lines, t0):
    import cvxpy as cp

    B = np.array([l.base for l in lines])
    Dm = np.array([l.dir for l in lines])
    t = cp.Variable(len(lines))
    t.value = t0
    X = B + cp.multiply(Dm, cp.reshape(t, (len(lines), 1), order="C"))
    Xn = cp.vstack([X[(i + 1) % len(lines)] for i in range(len(lines))])
    obj = cp.sum(cp.norm(Xn - X, 2, axis=1))
    prob = cp.Problem(cp.Minimize(obj))
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        return None
    if t.value is None:
        return None
    return np.asarray(t.value, dtype=float)


def tour_fixed_line_order(lines, tol: float = 1e-8, max_sweeps: int = 100_000) -> OracleResult:
    """Shortest closed tour touching the lines in the given cyclic order.

    Block-coordinate descent with golden-section steps, followed by a conic
    solve of the same convex program; the better point is kept.
    """
    lines = list(lines)
    n = len(lines)
    if n < 2:
        raise ValueError("need at least 2 lines")
    B = np.array([l.base for l in lines])
    Dm = np.array([l.dir for l in lines])
    t = np.zeros(n)
    X = B.copy()
    cost = _cyclic_cost(X)
    for sweep in range(max_sweeps):
        old = cost
        for i in range(n):
            a, c = X[i - 1], X[(i + 1) % n]
            ta = float(np.dot(a - B[i], Dm[i]))
            tc = float(np.dot(c - B[i], Dm[i]))
            lo, hi = min(ta, tc), max(ta, tc)

            def f(s, i=i, a=a, c=c):
                p = B[i] + s * Dm[i]
                return np.linalg.norm(p - a) + np.linalg.norm(p - c)

            s = _golden(f, lo, hi, tol * max(1.0, hi - lo)) if hi > lo else lo
            if f(s) <= f(t[i]):
                t[i] = s
                X[i] = B[i] + s * Dm[i]
        cost = _cyclic_cost(X)
        if old - cost < tol:
            break
    else:
        raise RuntimeError("line touring did not converge within the sweep cap")
    method = "bcd"
    tp = _socp_polish(lines, t)
    if tp is not None:
        Xp = B + Dm * tp[:, None]
        cp_cost = _cyclic_cost(Xp)
        if cp_cost < cost:
            X, cost, method = Xp, cp_cost, "bcd+socp"
    tour = Tour(X)
    for p, ln in zip(X, lines):
        if dist_point_line(p, ln) > 1e-6:
            raise AssertionError("oracle waypoint left its line")
    return OracleResult(tour, tour_cost(tour), method, "converged")


def cyclic_orders(n: int):
    """Cyclic orders of range(n) up to rotation and reflection."""
    if n <= 2:
        yield tuple(range(n))
        return
    for perm in itertools.permutations(range(1, n)):
        if perm[0] < perm[-1]:
            yield (0,) + perm


def exact_line_tspn(inst: LineInstance, max_lines: int = 8, tol: float = 1e-8) -> OracleResult:
    if inst.n > max_lines:
        raise OracleCapError(f"{inst.n} lines exceeds the enumeration cap {max_lines}")
    if inst.n == 1:
        return OracleResult(Tour(inst.lines[0].base[None, :]), 0.0, "trivial", "exact")
    best = None
    for order in cyclic_orders(inst.n):
        res = tour_fixed_line_order([inst.lines[i] for i in order], tol)
        if best is None or res.cost < best.cost - 1e-12:
            best = res
    return OracleResult(best.tour, best.cost, "enumeration", "converged")
