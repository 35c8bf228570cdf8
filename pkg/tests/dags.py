"""Random AND/OR graphs shaped like the dynamic-program graph: a cell tree whose
subproblem nodes pick one combination and combinations take one state per child cell."""
import numpy as np

from tspn.stgst import AndOrGraph


def random_andor(seed, max_nodes=40, max_depth=3):
    rng = np.random.default_rng(seed)
    while True:
        kind, out, cost = [], [], {}

        def new(k):
            kind.append(k)
            out.append([])
            return len(kind) - 1

        def cell(depth, n_states):
            subs = [new("sub") for _ in range(n_states)]
            if depth == 0 or rng.random() < 0.25:
                for s in subs:
                    cost[s] = float(np.round(rng.uniform(0, 10), 3))
                return subs
            children = [cell(depth - 1, int(rng.integers(1, 4))) for _ in range(int(rng.integers(1, 3)))]
            for s in subs:
                for _ in range(int(rng.integers(1, 4))):
                    c = new("comb")
                    out[s].append(c)
                    out[c] = [int(rng.choice(ch)) for ch in children]
            return subs

        cell(max_depth, 1)
        if len(kind) > max_nodes or len(kind) < 4:
            continue
        h = AndOrGraph(kind, out, cost, 0)
        leaves = [v for v in range(len(kind)) if h.is_leaf(v)]
        n_groups = int(rng.integers(1, 4))
        groups = [sorted(set(int(x) for x in rng.choice(leaves, size=int(rng.integers(1, len(leaves) + 1)))))
                  for _ in range(n_groups)]
        return h, groups
