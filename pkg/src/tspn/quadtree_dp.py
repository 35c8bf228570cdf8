"""Alias of tspn.quadtree."""
import sys

from tspn import quadtree as _m

sys.modules[__name__] = _m
