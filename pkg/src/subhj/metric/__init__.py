"""Horizontal graphs and distance computations."""

from .graph import HorizontalGraph, build_graph, cached_build, make_stencil, stencil_sizes
from .search import DistanceField, dist_point, extract_path, many_fields, shortest_distances

__all__ = [
    "DistanceField",
    "HorizontalGraph",
    "build_graph",
    "cached_build",
    "dist_point",
    "extract_path",
    "make_stencil",
    "many_fields",
    "shortest_distances",
    "stencil_sizes",
]
