import importlib


def test_module_aliases():
    for alias, real in [("hardness_gen", "hardness"), ("quadtree_dp", "quadtree"), ("dp_graph", "dpgraph")]:
        assert importlib.import_module(f"tspn.{alias}") is importlib.import_module(f"tspn.{real}")
