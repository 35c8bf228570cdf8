"""Approximation and hardness tooling for TSP with line and discrete neighborhoods."""

__version__ = "0.1.0"
