"""Alias of tspn.dpgraph."""
import sys

from tspn import dpgraph as _m

sys.modules[__name__] = _m
