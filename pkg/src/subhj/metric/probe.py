"""Refinement studies: graph distances against Koranyi and Euclidean ones."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..carnot import GroupSpec, koranyi_dist
from ..errors import InputError
from ..grid import DomainSpec
from ..hamiltonian import Hamiltonian
from .graph import build_graph
from .search import shortest_distances, snap


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise InputError("slope fit needs at least two positive samples")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class ProbeRow:
    pair: int
    spacing: float
    graph: float
    koranyi: float
    euclid: float

    @property
    def ratio_koranyi(self) -> float:
        return self.graph / self.koranyi if self.koranyi > 0 else float("nan")

    @property
    def ratio_euclid(self) -> float:
        return self.graph / self.euclid if self.euclid > 0 else float("nan")


@dataclass
class ProbeTable:
    pairs: list
    spacings: list
    rows: list[ProbeRow] = field(default_factory=list)
    unstable: list[int] = field(default_factory=list)

    def column(self, name: str, spacing: float) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows if r.spacing == spacing])

    def koranyi_band(self, spacing: float) -> tuple[float, float]:
        r = self.column("ratio_koranyi", spacing)
        return float(np.nanmin(r)), float(np.nanmax(r))

    def header(self) -> list[str]:
        return ["pair", "spacing", "graph", "koranyi", "euclid", "ratio_koranyi", "ratio_euclid"]

    def records(self) -> list[list]:
        return [
            [r.pair, r.spacing, r.graph, r.koranyi, r.euclid, r.ratio_koranyi, r.ratio_euclid] for r in self.rows
        ]


def convergence_probe(
    g: GroupSpec,
    dom: DomainSpec,
    hamiltonian: Hamiltonian | None,
    pairs,
    spacings,
    kind: str = "cc",
    directions: int = 16,
) -> ProbeTable:
    """Graph distance of each pair at each spacing (decreasing order required).

    A pair is flagged unstable when the successive changes
    ``|d_{h_{k+1}} - d_{h_k}|`` fail to decrease (needs three spacings).
    """
    spacings = [float(s) for s in spacings]
    if not spacings or any(b >= a for a, b in zip(spacings[:-1], spacings[1:])):
        raise InputError("spacings must be nonempty and strictly decreasing")
    pairs = [(np.asarray(x, float), np.asarray(y, float)) for x, y in pairs]
    table = ProbeTable(pairs, spacings)
    values = np.empty((len(pairs), len(spacings)))
    for j, h in enumerate(spacings):
        graph = build_graph(g, dom, h, directions, hamiltonian)
        xs = [snap(graph, x) for x, _ in pairs]
        ys = [snap(graph, y) for _, y in pairs]
        for a in sorted(set(xs)):
            idx = [k for k, x in enumerate(xs) if x == a]
            f = shortest_distances(graph, [a], kind, targets=[ys[k] for k in idx])
            for k in idx:
                values[k, j] = f.values[ys[k]]
        for k, (x, y) in enumerate(pairs):
            table.rows.append(
                ProbeRow(k, h, float(values[k, j]), float(koranyi_dist(g, x, y)), float(np.linalg.norm(y - x)))
            )
        del graph
    if len(spacings) >= 3:
        steps = np.abs(np.diff(values, axis=1))
        table.unstable = [k for k in range(len(pairs)) if np.any(np.diff(steps[k]) > 1e-12)]
    return table
