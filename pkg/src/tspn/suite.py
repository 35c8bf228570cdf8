"""Bundled small instances with fixed seeds, sized for exact oracles."""
from __future__ import annotations

import numpy as np

from .geometry import Line
from .instance import DiscreteInstance, LineInstance

# (groups, points) per discrete instance; all in the plane
DISCRETE_SIZES = [(3, 6), (3, 9), (4, 8), (4, 12), (4, 15), (5, 10), (5, 12), (5, 15), (6, 12), (6, 15)]
LINE_SIZES = [3, 3, 4, 4, 5, 5]


def random_discrete(n_groups: int, n_points: int, dim: int = 2, seed: int = 0, side: float = 10.0) -> DiscreteInstance:
    """Points uniform in [0, side]^dim dealt to groups so every group is nonempty."""
    if n_points < n_groups:
        raise ValueError("need at least one point per group")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, side, size=(n_points, dim))
    owner = np.concatenate([np.arange(n_groups), rng.integers(0, n_groups, n_points - n_groups)])
    rng.shuffle(owner)
    return DiscreteInstance([pts[owner == i] for i in range(n_groups)], dim)


def random_lines(n: int, dim: int = 3, seed: int = 0, side: float = 4.0) -> LineInstance:
    """Lines through uniform points of [0, side]^dim with uniform random directions."""
    rng = np.random.default_rng(seed)
    lines = []
    for _ in range(n):
        base = rng.uniform(0, side, dim)
        d = rng.standard_normal(dim)
        lines.append(Line(base, d / np.linalg.norm(d)))
    return LineInstance(dim, lines)


def discrete_suite() -> list[DiscreteInstance]:
    return [random_discrete(n, N, 2, seed=100 + k) for k, (n, N) in enumerate(DISCRETE_SIZES)]


def line_suite() -> list[LineInstance]:
    return [random_lines(n, 3, seed=200 + k) for k, n in enumerate(LINE_SIZES)]
