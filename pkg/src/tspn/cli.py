"""Command line: generate, discretize, solve, verify and report.

Exit codes: 0 feasible result emitted, 2 infeasible or a cap exceeded,
1 usage or I/O error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import hardness, suite
from .dpgraph import DagBudgetError, InfeasibleError, arora_tsp
from .geometry import Tour, tour_cost
from .instance import (
    DiscreteInstance, FlatInstance, InstanceFormatError, LineInstance, discretize_lines, lift_to_flats,
    line_tour_feasible, read_instance, read_sidecar, read_tour, write_instance, write_sidecar, write_tour,
)
from .oracle import OracleCapError, exact_line_tspn, held_karp_groups
from .pipeline import RunConfig, run_line_tspn, run_tspn
from .stgst import BudgetExceeded

EXIT_OK, EXIT_IO, EXIT_INFEASIBLE = 0, 1, 2
CAPS = (InfeasibleError, DagBudgetError, BudgetExceeded, OracleCapError, hardness.EmbeddingError,
        hardness.VertexCoverError, AssertionError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def _emit(items: dict, out: str | None, suffix: str = ".meta"):
    write = sys.stdout.write
    for k, v in items.items():
        if isinstance(v, (list, tuple, np.ndarray)) and np.size(v) > 12:
            continue
        write(f"{k} = {v}\n")
    if out:
        write_sidecar(str(out) + suffix, items)


def _parse_edges(text: str, tripartite: bool):
    edges = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        try:
            u, v = tok.split("-")
            if tripartite:
                u = tuple(int(x) for x in u.split("."))
                v = tuple(int(x) for x in v.split("."))
            else:
                u, v = int(u), int(v)
        except ValueError:
            raise UsageError(f"bad edge {tok!r}") from None
        edges.append((u, v))
    return edges


# -- svg ---------------------------------------------------------------------

def write_svg(path, tour: Tour, inst=None, size: int = 480) -> None:
    """Tour polygon (and discrete points) projected on the first two coordinates."""
    W = tour.waypoints[:, :2]
    pts = [W]
    if isinstance(inst, DiscreteInstance):
        pts.append(inst.points[:, :2])
    allp = np.vstack(pts)
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = max(float((hi - lo).max()), 1e-12)
    pad = 20

    def xy(p):
        q = (p - lo) / span * (size - 2 * pad) + pad
        return f"{q[0]:.3f},{size - q[1]:.3f}"

    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">']
    if isinstance(inst, DiscreteInstance):
        for p in inst.points:
            x, y = xy(p[:2]).split(",")
            body.append(f'<circle cx="{x}" cy="{y}" r="3" fill="#888"/>')
    body.append(f'<polygon points="{" ".join(xy(p) for p in W)}" fill="none" stroke="#c22" stroke-width="1.5"/>')
    body.append("</svg>")
    Path(path).write_text("\n".join(body) + "\n", encoding="utf-8")


# -- subcommands ---------------------------------------------------------------

def _need_out(args):
    if not args.out:
        raise UsageError("--out is required")
    return args.out


def cmd_gen(args):
    out = _need_out(args)
    if args.what == "cube":
        if args.complete:
            g = hardness.complete_tripartite(args.complete)
        else:
            sizes = args.classes or [1, 1, 1]
            g = hardness.TripartiteGraph.from_classes(sizes, _parse_edges(args.edges or "", True))
        c = hardness.gen_cube(g, args.m_grid)
        write_instance(c.line_instance(gadgets=not args.no_gadgets), out)
        _emit(c.sidecar(), out)
    elif args.what == "highdim":
        if args.vertices is None:
            raise UsageError("--vertices is required")
        g = hardness.Graph(args.vertices, _parse_edges(args.edges or "", False))
        c = hardness.gen_highdim(g, args.eps, args.alpha, seed=args.seed, d=args.dim)
        write_instance(c.line_instance(), out)
        _emit(c.sidecar(), out)
    elif args.what == "random":
        if args.lines:
            inst = suite.random_lines(args.groups, args.dim or 3, seed=args.seed)
        else:
            inst = suite.random_discrete(args.groups, args.points or args.groups, args.dim or 2, seed=args.seed)
        write_instance(inst, out)
        _emit({"kind": type(inst).__name__, "n": inst.n, "seed": args.seed}, None)
    else:  # lift
        if not args.input:
            raise UsageError("lift needs an input line instance")
        inst = read_instance(args.input)
        if not isinstance(inst, LineInstance):
            raise UsageError("lift needs a line instance")
        flats = lift_to_flats(inst, args.k, args.dim or inst.dim + 1)
        write_instance(flats, out)
        _emit({"kind": "FlatInstance", "n": len(flats.flats), "k": args.k, "dim": flats.dim}, None)
    return EXIT_OK


def cmd_discretize(args):
    inst = read_instance(args.input)
    if not isinstance(inst, LineInstance):
        raise UsageError("discretize needs a line instance")
    d = discretize_lines(inst)
    write_instance(d, _need_out(args))
    _emit({"groups": d.n, "points": d.N}, None)
    return EXIT_OK


def _config(args):
    return RunConfig(m=args.m, r=args.r, shifts=args.shifts, c=args.c, seed=args.seed, budget=args.budget)


def cmd_solve(args):
    inst = read_instance(args.input)
    items = {"mode": args.mode}
    if args.mode == "tsp":
        if not isinstance(inst, DiscreteInstance):
            raise UsageError("solve tsp needs a discrete instance of points")
        order, cost = arora_tsp(inst.points, args.m, args.r, args.shifts, args.seed)
        tour = Tour(inst.points[order])
        items.update(cost=cost, points=inst.N)
    elif args.mode == "tspn":
        cfg = _config(args)
        if isinstance(inst, LineInstance):
            rep = run_line_tspn(inst, cfg)
        elif isinstance(inst, DiscreteInstance):
            rep = run_tspn(inst, cfg)
        else:
            raise UsageError("solve tspn needs a discrete or line instance")
        tour = rep.tour
        ok = [r for r in rep.records if r.get("status") == "ok"]
        items.update(cost=rep.cost, seconds=round(rep.seconds, 3), cells=len(rep.records), cells_ok=len(ok),
                     best_record=rep.best_index)
    else:
        if isinstance(inst, LineInstance):
            res = exact_line_tspn(inst)
        elif isinstance(inst, DiscreteInstance):
            res = held_karp_groups(inst)
        else:
            raise UsageError("oracle needs a discrete or line instance")
        tour = res.tour
        items.update(cost=res.cost, method=res.method, optimality=res.optimality)
    if args.out:
        write_tour(tour, args.out)
    if args.svg:
        write_svg(args.svg, tour, inst)
    items["feasible"] = True
    _emit(items, args.out)
    return EXIT_OK


def cmd_verify(args):
    inst = read_instance(args.input)
    if args.what == "instance":
        n = inst.n if not isinstance(inst, FlatInstance) else len(inst.flats)
        _emit({"kind": type(inst).__name__, "dim": inst.dim, "n": n, "valid": True}, None)
        return EXIT_OK
    if not args.tour:
        raise UsageError("verify tour needs a tour file")
    t = read_tour(args.tour)
    if t.dim != inst.dim:
        raise UsageError(f"tour dimension {t.dim} differs from instance dimension {inst.dim}")
    if isinstance(inst, LineInstance):
        ok = line_tour_feasible(inst, t, args.tol)
    else:
        ok = inst.is_feasible(t, args.tol)
    _emit({"cost": tour_cost(t), "feasible": ok}, None)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_report(args):
    rows = [(p, read_sidecar(p)) for p in args.files]
    keys = []
    for _, d in rows:
        keys += [k for k in d if k not in keys and len(d[k]) <= 40]
    print("file\t" + "\t".join(keys))
    for p, d in rows:
        print(f"{p}\t" + "\t".join(d.get(k, "") for k in keys))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="tspn", description="TSP with neighborhoods: solvers, oracles and hardness generators")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(q):
        q.add_argument("--m", type=int, default=1)
        q.add_argument("--r", type=int, default=2)
        q.add_argument("--shifts", type=int, default=4)
        q.add_argument("--c", type=float, default=4.0)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--budget", type=int, default=RunConfig.budget)
        q.add_argument("--out")

    g = sub.add_parser("gen", help="generate an instance")
    g.add_argument("what", choices=["cube", "highdim", "random", "lift"])
    g.add_argument("input", nargs="?")
    common(g)
    g.add_argument("--complete", type=int, help="complete tripartite graph with classes of this size")
    g.add_argument("--classes", type=int, nargs=3)
    g.add_argument("--edges", help="comma list: a.i-b.j for cube, u-v for highdim")
    g.add_argument("--vertices", type=int)
    g.add_argument("--m-grid", type=int, default=4)
    g.add_argument("--no-gadgets", action="store_true")
    g.add_argument("--eps", type=float, default=0.1)
    g.add_argument("--alpha", type=int)
    g.add_argument("--dim", type=int)
    g.add_argument("--groups", type=int, default=4)
    g.add_argument("--points", type=int)
    g.add_argument("--lines", action="store_true")
    g.add_argument("--k", type=int, default=2)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("discretize", help="line instance to discrete instance")
    d.add_argument("input")
    d.add_argument("--out")
    d.set_defaults(func=cmd_discretize)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("mode", choices=["tsp", "tspn", "oracle"])
    s.add_argument("input")
    common(s)
    s.add_argument("--svg")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="validate an instance or a tour")
    v.add_argument("what", choices=["instance", "tour"])
    v.add_argument("input")
    v.add_argument("tour", nargs="?")
    v.add_argument("--tol", type=float, default=1e-6)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="tabulate sidecar files")
    r.add_argument("files", nargs="+")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CAPS as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
