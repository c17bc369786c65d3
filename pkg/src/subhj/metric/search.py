"""Distance fields on horizontal graphs: CC, optical length and Koranyi."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..carnot import koranyi_dist
from ..errors import DomainError, InputError
from . import _kernels
from .graph import HorizontalGraph

KINDS = ("cc", "sigma", "koranyi")

_NO_TARGETS = np.zeros(0, dtype=bool)


@dataclass(eq=False)
class DistanceField:
    """One-to-all (or set-to-all) distances.

    For a forward field ``values[v] = min_s init[s] + d(s, v)``; for a reverse
    field ``values[v] = min_s d(v, s) + init[s]``. ``pred[v]`` is the next node
    towards the source set and ``pdir[v]`` the stencil entry of the edge used.
    """

    graph: HorizontalGraph
    values: np.ndarray
    pred: np.ndarray
    pdir: np.ndarray
    sources: np.ndarray
    kind: str
    reverse: bool = False

    def __getitem__(self, idx):
        return self.values[idx]

    def at(self, points) -> np.ndarray:
        return self.values[self.graph.nearest(points)]


def threads() -> int:
    try:
        return max(1, int(os.environ.get("SUBHJ_THREADS", "1")))
    except ValueError:
        return 1


def _check_kind(kind: str):
    if kind not in KINDS:
        raise InputError(f"unknown metric kind {kind!r}; expected one of {KINDS}")


def shortest_distances(
    graph: HorizontalGraph,
    sources,
    kind: str = "sigma",
    initial=None,
    reverse: bool = False,
    limit: float = np.inf,
    targets=None,
) -> DistanceField:
    """Label-setting search from a node set.

    ``initial`` gives per-source starting labels (default 0). ``limit`` stops
    the search once the smallest open label exceeds it, and ``targets`` (a
    node list) stops it once all of them are settled; unsettled nodes carry
    ``inf``.
    """
    _check_kind(kind)
    src = np.ascontiguousarray(np.atleast_1d(sources), dtype=np.int64)
    if src.size == 0:
        raise InputError("source set is empty")
    if np.any((src < 0) | (src >= graph.size)):
        raise InputError("source index outside the graph")
    init = np.zeros(src.size) if initial is None else np.ascontiguousarray(np.broadcast_to(np.asarray(initial, float), src.shape))
    if kind == "koranyi":
        if reverse or src.size != 1:
            raise InputError("koranyi fields are single-source and symmetric")
        pts = graph.coords(np.arange(graph.size))
        vals = init[0] + koranyi_dist(graph.group, graph.coords(src[0]), pts)
        vals[~graph.mask] = np.inf
        n = graph.size
        return DistanceField(graph, vals, np.full(n, -1, np.int64), np.full(n, -1, np.int16), src, kind)
    tmask = _NO_TARGETS
    if targets is not None:
        tmask = np.zeros(graph.size, dtype=bool)
        tmask[np.asarray(targets, dtype=np.int64)] = True
    shape, lo, m, A, B = graph._geometry()
    dist, pred, pdir = _kernels.dijkstra(
        shape, lo, m, A, B, graph.piece, graph.table(kind), graph.mask, src, init, bool(reverse), float(limit), tmask
    )
    return DistanceField(graph, dist, pred, pdir, src, kind, bool(reverse))


def many_fields(graph, sources, kind="sigma", reverse=False, limit=np.inf, reducer=None):
    """Independent single-source searches, run on ``SUBHJ_THREADS`` workers.

    ``reducer(i, field)`` maps each field to what is kept (default: values),
    so callers do not hold every full field in memory.
    """
    reducer = reducer or (lambda i, f: f.values)

    def job(i):
        return reducer(i, shortest_distances(graph, [sources[i]], kind, reverse=reverse, limit=limit))

    if threads() == 1 or len(sources) < 2:
        return [job(i) for i in range(len(sources))]
    with ThreadPoolExecutor(max_workers=threads()) as pool:
        return list(pool.map(job, range(len(sources))))


def snap(graph: HorizontalGraph, x) -> int:
    idx = int(graph.nearest(np.asarray(x, dtype=float))[0])
    if not graph.mask[idx]:
        raise DomainError(f"point {np.asarray(x).tolist()} snaps to a node outside the domain")
    return idx


def dist_point(graph: HorizontalGraph, x, y, kind: str = "sigma") -> float:
    """Graph distance from the node nearest x to the node nearest y (not symmetric)."""
    a, b = snap(graph, x), snap(graph, y)
    if kind == "koranyi":
        return float(koranyi_dist(graph.group, graph.coords(a), graph.coords(b))[0])
    f = shortest_distances(graph, [a], kind, targets=[b])
    return float(f.values[b])


def edge_cost(graph: HorizontalGraph, tail: int, s: int, kind: str) -> float:
    pc = graph.piece[0 if graph.piece.shape[0] == 1 else tail, s]
    return float(graph.table(kind)[pc, s])


def extract_path(field: DistanceField, target: int):
    """Nodes, points and cumulative costs from the source set to ``target``.

    For a reverse field the walk starts at ``target`` and ends at a source, so
    the path is still traversed along edge direction; costs then accumulate
    from zero at ``target``.
    """
    if field.kind == "koranyi":
        raise InputError("koranyi fields carry no paths")
    target = int(target)
    if not np.isfinite(field.values[target]):
        raise DomainError("target was not reached")
    chain = [target]
    while field.pred[chain[-1]] >= 0:
        chain.append(int(field.pred[chain[-1]]))
    g = field.graph
    if field.reverse:
        nodes = chain
        steps = [edge_cost(g, u, int(field.pdir[u]), field.kind) for u in nodes[:-1]]
        start = 0.0
    else:
        nodes = chain[::-1]
        steps = [edge_cost(g, u, int(field.pdir[v]), field.kind) for u, v in zip(nodes[:-1], nodes[1:])]
        start = field.values[nodes[0]]
    # sequential sum, matching the order the search accumulated the labels
    cum = np.cumsum(np.concatenate([[start], steps]))
    return np.asarray(nodes, dtype=np.int64), g.coords(np.asarray(nodes)), cum
