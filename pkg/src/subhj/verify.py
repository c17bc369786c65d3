"""Numerical checks of Monge and viscosity properties.

The Monge quotient at x0 is

    q(x) = (u(x) - u(x0) + d_sigma(x0, x)) / d_CC(x0, x)

and a Monge solution has ``liminf_{x -> x0} q = 0``. It is estimated by the
minimum of q over graph nodes in CC annuli ``(r/2, r]`` around the node
nearest x0, with ``u(x0)`` interpolated at the exact probe point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .carnot import GroupSpec, horizontal_gradient_fd
from .errors import DomainError, InputError
from .grid import ScalarField
from .hamiltonian import Hamiltonian, eval_H
from .metric.graph import HorizontalGraph
from .metric.search import shortest_distances, snap

CLASSES = ("solution_ok", "subsolution_ok", "supersolution_ok", "violated")


def default_radii(r: float, levels: int = 2) -> list[float]:
    """Dyadic schedule r, r/2, ... with ``levels`` entries."""
    return [r / 2**k for k in range(levels)]


def classify(estimate: float, tau: float) -> tuple[str, tuple | None]:
    """Class of a liminf estimate, plus the (side, margin) it violates if any."""
    if abs(estimate) <= tau:
        return "solution_ok", None
    if estimate > tau:
        return "subsolution_ok", ("supersolution", estimate - tau)
    return "supersolution_ok", ("subsolution", -estimate - tau)


@dataclass
class MongeRecord:
    x0: np.ndarray
    node: int
    radii: list
    infima: list
    estimate: float
    tau: float
    classification: str
    violation: tuple | None = None

    def holds(self, side: str = "solution") -> bool:
        """Whether the requested property holds at this probe."""
        if side == "solution":
            return self.classification == "solution_ok"
        if side == "subsolution":
            return self.estimate >= -self.tau
        if side == "supersolution":
            return self.estimate <= self.tau
        raise InputError(f"unknown side {side!r}")

    def to_dict(self) -> dict:
        return {
            "probe": self.x0.tolist(),
            "radii": list(self.radii),
            "infima": [None if not np.isfinite(v) else float(v) for v in self.infima],
            "estimate": float(self.estimate),
            "class": self.classification,
            "violation": None if self.violation is None else [self.violation[0], float(self.violation[1])],
        }


@dataclass
class MongeResidualReport:
    records: list[MongeRecord]
    tau: float

    def holds(self, side: str = "solution") -> bool:
        return all(r.holds(side) for r in self.records)

    @property
    def worst(self) -> float:
        return max(abs(r.estimate) for r in self.records)

    def to_list(self) -> list[dict]:
        return [r.to_dict() for r in self.records]


def default_tau(graph: HorizontalGraph, radii: Sequence[float]) -> float:
    return 10.0 * graph.cell_cost / min(radii)


def monge_residual(
    u: ScalarField,
    H: Hamiltonian,
    graph: HorizontalGraph,
    x0,
    radii: Sequence[float],
    tau: float | None = None,
) -> MongeRecord:
    """Annulus minima of the Monge quotient around ``x0``.

    ``H`` must be the Hamiltonian the graph was built for (or agree with it on
    the ball). The ball of the largest radius must stay inside the field's
    interior and away from the graph's box; otherwise ``DomainError``.
    """
    radii = sorted((float(r) for r in radii), reverse=True)
    if not radii or radii[-1] <= 0:
        raise InputError("radii must be positive")
    if graph.hamiltonian is None:
        raise InputError("the graph carries no optical costs")
    # the graph may carry any extension K of H: they must agree inside omega
    if H is not graph.hamiltonian and graph.hamiltonian.pieces != H.pieces:
        raise InputError("H does not match the graph's Hamiltonian")
    tau = default_tau(graph, radii) if tau is None else float(tau)
    x0 = np.asarray(x0, dtype=float)
    n0 = snap(graph, x0)
    u0 = float(u(x0))
    r_max = radii[0]
    cc = shortest_distances(graph, [n0], "cc", limit=r_max)
    ball = np.flatnonzero(np.isfinite(cc.values))
    u_ball, inside = _field_on_nodes(u, graph, ball)
    if not np.all(inside):
        raise DomainError(f"CC ball of radius {r_max} around {x0.tolist()} leaves the field's interior")
    lat = graph.lattice
    mi = lat.multi_index(ball)
    if np.any(mi == 0) or np.any(mi == np.asarray(lat.shape) - 1):
        raise DomainError("CC ball touches the edge of the graph's box")
    # sigma <= alpha * cc, so every node of the CC ball is settled below alpha * r_max
    sig = shortest_distances(graph, [n0], "sigma", limit=H.alpha * r_max * (1 + 1e-12))
    d_cc = cc.values[ball]
    d_sig = sig.values[ball]
    q = (u_ball - u0 + d_sig) / np.where(d_cc > 0, d_cc, np.nan)
    infima = []
    for r in radii:
        sel = (d_cc > r / 2) & (d_cc <= r)
        infima.append(float(np.min(q[sel])) if np.any(sel) else np.inf)
    est = infima[-1]
    if not np.isfinite(est):
        raise DomainError(f"no graph node in the annulus of radius {radii[-1]}; refine the spacing")
    cls, viol = classify(est, tau)
    return MongeRecord(x0, n0, radii, infima, est, tau, cls, viol)


def _field_on_nodes(u: ScalarField, graph: HorizontalGraph, nodes):
    """Values of u at graph nodes and whether each lies in u's interior."""
    if u.lattice == graph.lattice:
        return u.values[nodes], u.interior[nodes]
    pts = graph.coords(nodes)
    try:
        own = u.lattice.nearest(pts)
    except DomainError:
        return np.full(len(nodes), np.nan), np.zeros(len(nodes), dtype=bool)
    if np.any(np.abs(u.lattice.coords(own) - pts) > 1e-12 * np.maximum(1, np.abs(pts))):
        raise InputError("field and graph lattices are not aligned")
    return u.values[own], u.interior[own]


def monge_residuals(u, H, graph, probes, radii, tau=None) -> MongeResidualReport:
    recs = [monge_residual(u, H, graph, x, radii, tau) for x in np.atleast_2d(probes)]
    return MongeResidualReport(recs, recs[0].tau if recs else float("nan"))


@dataclass
class AeReport:
    """Per-probe H(x, Xu(x)); NaN marks probes that were skipped."""

    values: np.ndarray
    probes: np.ndarray
    tau_fd: float

    @property
    def evaluated(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def skipped(self) -> int:
        return int(np.sum(~self.evaluated))

    @property
    def ok(self) -> np.ndarray:
        return self.evaluated & (np.nan_to_num(self.values, nan=np.inf) <= self.tau_fd)

    @property
    def fraction_ok(self) -> float:
        n = int(self.evaluated.sum())
        return float(self.ok.sum() / n) if n else float("nan")

    @property
    def worst(self) -> tuple[np.ndarray, float] | None:
        if not self.evaluated.any():
            return None
        k = int(np.nanargmax(self.values))
        return self.probes[k], float(self.values[k])

    def passed(self, fraction: float = 1.0) -> bool:
        return bool(self.evaluated.any()) and self.fraction_ok >= fraction

    def to_dict(self) -> dict:
        w = self.worst
        return {
            "fraction_ok": self.fraction_ok,
            "tau_fd": self.tau_fd,
            "skipped": self.skipped,
            "worst": None if w is None else {"probe": w[0].tolist(), "value": w[1]},
        }


def ae_subsolution_check(
    u: Callable, H: Hamiltonian, g: GroupSpec, probes, h_fd: float, tau_fd: float = 0.1
) -> AeReport:
    """H(x, Xu(x)) <= tau_fd at each probe, Xu by horizontal central differences.

    Probes whose difference stencil leaves the field's support are skipped:
    their value is NaN and they count neither as passing nor failing.
    """
    pts = np.atleast_2d(np.asarray(probes, dtype=float))
    vals = np.full(pts.shape[0], np.nan)
    for k, x in enumerate(pts):
        try:
            grad = horizontal_gradient_fd(g, u, x, h_fd)
        except DomainError:
            continue
        vals[k] = float(eval_H(H, x, grad))
    return AeReport(vals, pts, tau_fd)


@dataclass
class LipschitzReport:
    passed: bool
    margin: float
    worst_pair: tuple | None
    tol: float
    pairs: int

    def to_dict(self) -> dict:
        wp = None if self.worst_pair is None else [np.asarray(p).tolist() for p in self.worst_pair]
        return {"passed": self.passed, "margin": self.margin, "worst_pair": wp, "tol": self.tol, "pairs": self.pairs}


def lipschitz_vs_optical(u: ScalarField, graph: HorizontalGraph, H: Hamiltonian, pairs, tol: float | None = None):
    """u(x) - u(y) <= d_sigma(x, y) + tol on ordered pairs (points or node ids)."""
    tol = 2.0 * graph.cell_cost if tol is None else float(tol)
    pairs = list(pairs)
    if not pairs:
        raise InputError("no pairs given")
    xs = np.array([_node(graph, p[0]) for p in pairs])
    ys = np.array([_node(graph, p[1]) for p in pairs])
    slack = np.empty(len(pairs))
    for a in np.unique(xs):
        sel = np.flatnonzero(xs == a)
        f = shortest_distances(graph, [a], "sigma", targets=ys[sel])
        slack[sel] = f.values[ys[sel]] - (u.values[a] - u.values[ys[sel]])
    k = int(np.argmin(slack))
    worst = (graph.coords(xs[k])[0], graph.coords(ys[k])[0])
    return LipschitzReport(bool(slack[k] >= -tol), float(slack[k]), worst, tol, len(pairs))


def _node(graph, p) -> int:
    if np.ndim(p) == 0:
        return int(p)
    return snap(graph, p)


@dataclass
class ComparisonReport:
    status: str  # "pass", "fail" or "precondition unmet"
    max_excess: float | None
    boundary_excess: float
    tol: float
    worst_node: int | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "max_excess": self.max_excess,
            "boundary_excess": self.boundary_excess,
            "tol": self.tol,
            "worst_node": self.worst_node,
        }


def comparison_harness(
    H: Hamiltonian, graph: HorizontalGraph, u_sub: ScalarField, v_super: ScalarField, tol: float | None = None
) -> ComparisonReport:
    """Boundary dominance u <= v, then the interior verdict max(u - v) <= tol."""
    tol = 3.0 * H.alpha * graph.spacing if tol is None else float(tol)
    if u_sub.lattice != v_super.lattice:
        raise InputError("fields live on different lattices")
    bmask = np.zeros(u_sub.lattice.size, dtype=bool)
    for f in (u_sub, v_super):
        if f.boundary is not None:
            bmask |= f.boundary
    both = u_sub.support & v_super.support
    bnodes = np.flatnonzero(bmask & both)
    if bnodes.size == 0:
        raise InputError("fields carry no common boundary samples")
    bex = float(np.max(u_sub.values[bnodes] - v_super.values[bnodes]))
    if bex > tol:
        return ComparisonReport("precondition unmet", None, bex, tol)
    inner = np.flatnonzero(both & ~bmask)
    diff = u_sub.values[inner] - v_super.values[inner]
    k = int(np.argmax(diff))
    mx = float(diff[k])
    return ComparisonReport("pass" if mx <= tol else "fail", mx, bex, tol, int(inner[k]))


@dataclass
class StabilityReport:
    distance_dev: list
    solution_dev: list
    distance_monotone: bool
    solution_monotone: bool
    residuals: MongeResidualReport | None
    meta: dict = field(default_factory=dict)

    @property
    def distance_ratio(self) -> float:
        return self.distance_dev[-1] / self.distance_dev[0] if self.distance_dev[0] > 0 else float("nan")

    @property
    def solution_ratio(self) -> float:
        return self.solution_dev[-1] / self.solution_dev[0] if self.solution_dev[0] > 0 else float("nan")

    def to_dict(self) -> dict:
        return {
            "distance_dev": self.distance_dev,
            "solution_dev": self.solution_dev,
            "distance_monotone": self.distance_monotone,
            "solution_monotone": self.solution_monotone,
            "distance_ratio": self.distance_ratio,
            "solution_ratio": self.solution_ratio,
            "residuals": None if self.residuals is None else self.residuals.to_list(),
        }


def _non_increasing(seq) -> bool:
    return all(b <= a for a, b in zip(seq[:-1], seq[1:]))


def stability_harness(
    H_seq: Sequence[Hamiltonian],
    H_inf: Hamiltonian,
    builder: Callable[[Hamiltonian], HorizontalGraph],
    solver: Callable[[HorizontalGraph, Hamiltonian], ScalarField],
    pairs,
    probes=None,
    radii=None,
) -> StabilityReport:
    """Deviation of distances and Hopf-Lax solutions along H_n -> H_inf.

    ``builder(H)`` returns the graph for a Hamiltonian and ``solver(graph, H)``
    the solution field on it. Distances are compared on ``pairs`` of points;
    solutions on every node where both are defined. Monge residuals of the
    limit solution are computed at ``probes`` when given.
    """
    if any(h.alpha != H_inf.alpha for h in H_seq):
        raise InputError("stability needs one alpha for the whole sequence")
    pairs = list(pairs)

    def pair_distances(graph):
        out = np.empty(len(pairs))
        xs = [snap(graph, p[0]) for p in pairs]
        ys = [snap(graph, p[1]) for p in pairs]
        for a in sorted(set(xs)):
            idx = [k for k, x in enumerate(xs) if x == a]
            f = shortest_distances(graph, [a], "sigma", targets=[ys[k] for k in idx])
            out[idx] = f.values[[ys[k] for k in idx]]
        return out

    g_inf = builder(H_inf)
    d_inf = pair_distances(g_inf)
    u_inf = solver(g_inf, H_inf)
    ddev, udev = [], []
    for h in H_seq:
        gr = builder(h)
        ddev.append(float(np.max(np.abs(pair_distances(gr) - d_inf))))
        un = solver(gr, h)
        both = un.interior & u_inf.interior
        udev.append(float(np.max(np.abs(un.values[both] - u_inf.values[both]))))
        del gr
    res = None
    if probes is not None:
        res = monge_residuals(u_inf, g_inf.hamiltonian, g_inf, probes, radii)
    return StabilityReport(ddev, udev, _non_increasing(ddev), _non_increasing(udev), res)
