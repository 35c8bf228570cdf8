"""Alias of tspn.hardness."""
import sys

from tspn import hardness as _m

sys.modules[__name__] = _m
