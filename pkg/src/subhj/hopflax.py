"""Dirichlet problem through the Hopf-Lax formula.

    w(x) = min over boundary samples y of  d_K(x, y) + g(y)

with ``d_K`` the optical length of a global extension K of H. The minimum is
one reverse multi-source search whose sources start at their labels g(y).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .carnot import GroupSpec
from .errors import CompatibilityError, DomainError, InputError
from .expr import Expression, parse_formula
from .grid import DomainSpec, Lattice, ScalarField
from .hamiltonian import Hamiltonian, extend
from .metric.graph import HorizontalGraph, build_graph, make_stencil
from .metric import _kernels
from .metric.search import shortest_distances

VIOLATED_LABEL = "compatibility violated: w may not attain g"


@dataclass(eq=False)
class BoundaryDatum:
    """Samples ``(points[k], values[k])`` of g on the boundary of a domain."""

    points: np.ndarray
    values: np.ndarray
    provenance: str = "tabulated"
    formula: str | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.points.shape[0] != self.values.shape[0]:
            raise InputError("boundary datum needs one value per sample point")
        if self.points.shape[0] == 0:
            raise InputError("boundary datum has no samples")
        if not np.all(np.isfinite(self.values)):
            raise InputError("boundary values must be finite")
        if self.provenance not in ("formula", "tabulated"):
            raise InputError("provenance must be 'formula' or 'tabulated'")

    @classmethod
    def from_formula(cls, lattice: Lattice, omega: DomainSpec, formula: str | Expression) -> "BoundaryDatum":
        """Evaluate ``formula`` at the boundary nodes of ``omega`` on ``lattice``."""
        expr = parse_formula(formula) if isinstance(formula, str) else formula
        pts = lattice.coords(lattice.boundary_nodes(omega))
        if pts.shape[0] == 0:
            raise InputError("the domain has no boundary nodes at this spacing")
        return cls(pts, expr(pts), "formula", expr.text)

    @classmethod
    def from_function(cls, lattice: Lattice, omega: DomainSpec, fn) -> "BoundaryDatum":
        pts = lattice.coords(lattice.boundary_nodes(omega))
        return cls(pts, np.broadcast_to(np.asarray(fn(pts), dtype=float), (pts.shape[0],)).copy(), "formula")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def oscillation(self) -> float:
        return float(self.values.max() - self.values.min())

    def shifted(self, c: float) -> "BoundaryDatum":
        return BoundaryDatum(self.points, self.values + c, self.provenance, self.formula)

    def nodes(self, graph: HorizontalGraph, omega: DomainSpec | None = None) -> np.ndarray:
        """Graph nodes of the samples; each must lie within one cell of the boundary."""
        idx = graph.nearest(self.points)
        snapped = graph.coords(idx)
        if np.any(np.abs(snapped - self.points) > 0.5 * graph.lattice.steps + 1e-9):
            raise DomainError("boundary sample off the lattice by more than half a cell")
        if omega is not None:
            closure, boundary = graph.lattice.domain_masks(omega)
            # allow one axis step of slack around the sampled boundary
            if not np.all(graph.lattice.dilate(boundary)[idx]):
                raise DomainError("boundary sample farther than one cell from the domain boundary")
        if not np.all(graph.mask[idx]):
            raise DomainError("boundary sample outside the graph")
        return idx


@dataclass
class BccReport:
    passed: bool
    tol: float
    margin: float
    worst_pair: tuple | None
    samples: int
    override: bool = False

    def to_dict(self) -> dict:
        wp = None
        if self.worst_pair is not None:
            x, y = self.worst_pair
            wp = [np.asarray(x).tolist(), np.asarray(y).tolist()]
        return {
            "passed": bool(self.passed),
            "worst_pair": wp,
            "margin": float(self.margin),
            "tol": self.tol,
            "samples": self.samples,
            "override": self.override,
        }


@dataclass(eq=False)
class SolutionField:
    u: ScalarField
    boundary: BoundaryDatum
    hamiltonian_hash: str
    bcc: BccReport | None
    omega: DomainSpec
    graph: HorizontalGraph
    label: str = "ok"
    attainment_error: float = 0.0
    unreached: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return self.u.values


def certified_margin(
    omega: DomainSpec, h: Hamiltonian, oscillation: float, spacing: float, directions_radius: float, exterior=None
) -> float:
    """First-layer margin beyond which the extended graph cannot change w.

    Any point of omega reaches the boundary along an axis within half the
    smallest first-layer width ``rho``, at cost at most ``C rho`` (C the largest
    circumradius inside). A path that leaves the box and comes back travels at
    least ``2 M`` outside omega at cost rate at least ``r_ext`` (smallest
    exterior inradius). ``2 M r_ext >= C rho + osc g`` makes such paths
    useless both for w and for the compatibility check. One edge of padding
    absorbs edges that straddle the boundary.
    """
    m = h.m
    widths = (omega.highs - omega.lows)[:m]
    rho = 0.5 * float(np.min(widths))
    inner = max(p.zset.circumradius() for p in h.pieces)
    ext = exterior if exterior is not None else (h.exterior or ())
    r_ext = min((p.zset.inradius() for p in ext), default=h.alpha)
    return (inner * rho + oscillation) / (2.0 * r_ext) + spacing * directions_radius


def extended_box(g: GroupSpec, omega: DomainSpec, margin: float) -> DomainSpec:
    """Bounding box of omega grown so that a horizontal path of length
    ``margin`` started in omega cannot leave it."""
    if g.step > 2:
        raise InputError("extended boxes are implemented for step <= 2")
    m = g.m
    lows, highs = omega.lows.copy(), omega.highs.copy()
    lows[:m] -= margin
    highs[:m] += margin
    if g.step == 2:
        corner = np.maximum(np.abs(omega.lows[:m]), np.abs(omega.highs[:m]))
        xmax = float(np.linalg.norm(corner))
        for k in range(g.n - m):
            ck = np.linalg.norm(g.bracket[k], 2)
            grow = 0.5 * ck * (xmax + margin) * margin
            lows[m + k] -= grow
            highs[m + k] += grow
    return DomainSpec(tuple(zip(lows, highs)))


def default_margin(g: GroupSpec, omega: DomainSpec, alpha: float) -> float:
    return alpha**2 * omega.first_layer_diameter(g)


def resolve_margin(
    g: GroupSpec,
    omega: DomainSpec,
    K: Hamiltonian,
    spacing: float,
    directions: int = 16,
    margin: float | str | None = None,
    oscillation: float = 0.0,
) -> float:
    """Numeric first-layer margin from a number, ``None`` or ``"certified"``."""
    if margin is None:
        margin = default_margin(g, omega, K.alpha)
    elif margin == "certified":
        radius = float(np.max(np.linalg.norm(make_stencil(g.m, directions), axis=1)))
        margin = certified_margin(omega, K, oscillation, spacing, radius, K.exterior)
    margin = float(margin)
    if not margin > 0:
        raise InputError("the extended box must strictly contain omega")
    return margin


def extended_graph(
    g: GroupSpec,
    omega: DomainSpec,
    h: Hamiltonian,
    spacing: float,
    directions: int = 16,
    margin: float | str | None = None,
    K: Hamiltonian | None = None,
    oscillation: float = 0.0,
) -> tuple[HorizontalGraph, Hamiltonian]:
    """Graph of a global extension K over a box strictly containing omega.

    ``margin`` is a number, ``None`` (alpha^2 times the first-layer diameter
    of omega) or ``"certified"`` (see ``certified_margin``, which needs the
    oscillation of the boundary datum).
    """
    K = K if K is not None else extend(h, omega)
    if not K.is_global:
        raise InputError("K must be globally defined")
    if K.alpha != h.alpha:
        raise InputError("K must share alpha with H")
    margin = resolve_margin(g, omega, K, spacing, directions, margin, oscillation)
    box = extended_box(g, omega, margin)
    graph = build_graph(g, box, spacing, directions, K)
    graph.meta["margin"] = margin
    graph.meta["omega"] = omega
    return graph, K


def _tol(graph: HorizontalGraph) -> float:
    return 2.0 * graph.cell_cost


def check_bcc(graph: HorizontalGraph, K: Hamiltonian, g: BoundaryDatum) -> BccReport:
    """Check g(x) - g(y) <= d_K(x, y) + tol on all ordered pairs of samples.

    Equivalent to ``min_{x != y} (d_K(x, y) - g(x)) + g(y) >= -tol`` for every
    sample y. One forward search from all samples, started at labels -g(x) and
    keeping the two best distinct origins per node, gives that minimum for
    every y at once.
    """
    if graph.hamiltonian is not K:
        raise InputError("the graph was not built for this Hamiltonian")
    nodes = g.nodes(graph)
    tol = _tol(graph)
    shape, lo, m, A, B = graph._geometry()
    best, org, second, org2 = _kernels.two_nearest(
        shape, lo, m, A, B, graph.piece, graph.table("sigma"), graph.mask,
        np.ascontiguousarray(nodes), np.ascontiguousarray(-g.values), False,
    )
    own = np.arange(len(g))
    other = np.where(org[nodes] == own, second[nodes], best[nodes])
    origin = np.where(org[nodes] == own, org2[nodes], org[nodes])
    slack = other + g.values
    if not np.any(np.isfinite(slack)):
        return BccReport(True, tol, np.inf, None, len(g))
    j = int(np.argmin(slack))
    worst = float(slack[j])
    return BccReport(bool(worst >= -tol), tol, worst, (g.points[origin[j]], g.points[j]), len(g))


def solve_dirichlet(
    graph: HorizontalGraph,
    K: Hamiltonian,
    g: BoundaryDatum,
    omega: DomainSpec,
    bcc: BccReport | None = None,
    override: bool = False,
    check: bool = True,
) -> SolutionField:
    """Hopf-Lax solution on omega's nodes.

    Raises ``CompatibilityError`` when the compatibility check fails unless
    ``override`` is set, in which case w is still computed and labelled.
    """
    if graph.hamiltonian is not K:
        raise InputError("the graph was not built for this Hamiltonian")
    if bcc is None and check:
        bcc = check_bcc(graph, K, g)
    label = "ok"
    if bcc is not None and not bcc.passed:
        if not override:
            raise CompatibilityError(
                f"boundary datum violates compatibility by {-bcc.margin:.6g} (tol {bcc.tol:.3g}); "
                "pass override to compute w anyway"
            )
        bcc.override = True
        label = VIOLATED_LABEL
    nodes = g.nodes(graph, omega)
    closure, boundary = graph.lattice.domain_masks(omega)
    f = shortest_distances(graph, nodes, "sigma", initial=g.values, reverse=True, targets=np.flatnonzero(closure))
    vals = np.where(closure, f.values, np.nan)
    unreached = int(np.sum(closure & ~np.isfinite(f.values)))
    bmask = np.zeros(graph.size, dtype=bool)
    bmask[nodes] = True
    u = ScalarField(graph.lattice, vals, bmask | boundary, {"hamiltonian": K.digest(), "label": label})
    attain = float(np.max(np.abs(f.values[nodes] - g.values)))
    return SolutionField(u, g, K.digest(), bcc, omega, graph, label, attain, unreached)


def restrict_to_monge_data(solution: SolutionField) -> ScalarField:
    u = solution.u
    meta = dict(u.meta)
    meta.update({"hamiltonian": solution.hamiltonian_hash, "label": solution.label})
    return ScalarField(u.lattice, u.values.copy(), None if u.boundary is None else u.boundary.copy(), meta)


def random_lipschitz_formula(rng: np.random.Generator, m: int, lipschitz: float, floor: float = 0.0) -> str:
    """Formula ``c + a.y + b |y_j - z|`` in the first-layer coordinates.

    Its Euclidean Lipschitz constant in the first layer is at most
    ``lipschitz``; the constant term is drawn in ``[floor, floor + 1)``.
    """
    a = rng.normal(size=m)
    share = rng.uniform(0.2, 0.8)
    a *= share * lipschitz / np.linalg.norm(a)
    b = (1.0 - share) * lipschitz * rng.choice([-1.0, 1.0])
    j = int(rng.integers(m)) + 1
    z = rng.uniform(-0.5, 0.5)
    c = floor + rng.uniform(0.0, 1.0)
    terms = [format(c, ".17g")]
    terms += [f"{format(ai, '.17g')}*x{i + 1}" for i, ai in enumerate(a)]
    terms.append(f"{format(b, '.17g')}*abs(x{j}-({format(z, '.17g')}))")
    return " + ".join(f"({t})" for t in terms)


def random_ordered_formulas(rng: np.random.Generator, m: int, lipschitz: float) -> tuple[str, str]:
    """Boundary formulas ``lo <= hi`` everywhere, each ``lipschitz``-Lipschitz."""
    lo = random_lipschitz_formula(rng, m, 0.5 * lipschitz)
    bump = random_lipschitz_formula(rng, m, 0.5 * lipschitz)
    # clipping at 0 keeps the order without raising the Lipschitz constant
    return lo, f"({lo}) + max({bump}, 0)"
