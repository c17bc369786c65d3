"""Horizontal graphs on dilation-adapted lattices.

Every edge is the exact flow of a constant horizontal control. Controls are
``c = A / |A|`` for primitive integer vectors ``A`` and run for ``tau = h |A|``,
so the first-layer displacement ``h A`` is a lattice vector. The second-layer
displacement depends linearly on the tail's first-layer index; for groups with
integer structure constants (Heisenberg included) it is again a lattice vector
and no snapping happens. Otherwise it is rounded to the nearest node, which
moves the endpoint by at most half a cell.

Edges are implicit: a node and a stencil index determine the head. The only
stored per-edge data is a ``uint8`` piece index selecting which ZSet of the
Hamiltonian governs the edge (255 = edge dropped).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..carnot import GroupSpec, group_mul
from ..errors import InputError
from ..grid import DomainSpec, Lattice
from ..hamiltonian import Hamiltonian
from . import _kernels

MAGIC = b"SUBHJ-GRAPH-v1\n"
NO_EDGE = _kernels.NO_EDGE
_CHUNK = 1 << 20


def primitive_vectors(m: int, radius: int) -> np.ndarray:
    """Primitive integer vectors with max-norm <= radius, axis vectors first."""
    out = []
    for v in itertools.product(range(-radius, radius + 1), repeat=m):
        if any(v) and math.gcd(*(abs(c) for c in v)) == 1:
            out.append(v)
    arr = np.array(out, dtype=np.int64)
    axis = (np.abs(arr).sum(axis=1) == 1)
    if m == 2:
        ang = np.arctan2(arr[:, 1], arr[:, 0]) % (2 * np.pi)
        order = np.lexsort((ang, ~axis))
    else:
        order = np.lexsort(tuple(arr.T[::-1]) + (~axis,))
    return arr[order]


def stencil_sizes(m: int, max_radius: int = 8) -> list[int]:
    sizes = {2 * m}
    for r in range(1, max_radius + 1):
        sizes.add(len(primitive_vectors(m, r)))
        if m >= 3:
            break
    return sorted(sizes)


def make_stencil(m: int, directions: int) -> np.ndarray:
    """Integer stencil with ``directions`` entries.

    ``2m`` gives the axis moves; larger counts take every primitive vector up
    to a max-norm radius (4, 8, 16, 32, 48, ... for m = 2).
    """
    if directions < 2 * m:
        raise InputError(f"need at least {2 * m} directions (the axis moves) for rank {m}")
    if directions == 2 * m:
        return primitive_vectors(m, 1)[: 2 * m]
    for r in range(1, 9):
        prim = primitive_vectors(m, r)
        if len(prim) == directions:
            return prim
        if len(prim) > directions or m >= 3:
            break
    raise InputError(f"unsupported stencil size {directions} for rank {m}; choose one of {stencil_sizes(m)}")


def second_layer_rates(g: GroupSpec, A: np.ndarray) -> np.ndarray:
    """B[s, k, i]: second-layer index increment per unit of first-layer index i.

    Derived from the group law: with tail x = h I and step (h A, 0) the
    second-layer displacement is h^2 * sum_i B[s, k, i] I_i.
    """
    n2 = g.n - g.m
    if g.step == 1:
        return np.zeros((len(A), 0, g.m))
    B = np.zeros((len(A), n2, g.m))
    step = np.zeros((len(A), g.n))
    step[:, : g.m] = A
    for i in range(g.m):
        x = np.zeros(g.n)
        x[i] = 1.0
        moved = group_mul(g, x, step) - x - step
        B[:, :, i] = moved[:, g.m :]
    return B


@dataclass
class ConnectivityReport:
    nodes: int
    reached: int

    @property
    def connected(self) -> bool:
        return self.reached == self.nodes


@dataclass(eq=False)
class HorizontalGraph:
    group: GroupSpec
    lattice: Lattice
    domain: DomainSpec
    stencil: np.ndarray
    rates: np.ndarray
    mask: np.ndarray
    piece: np.ndarray
    hamiltonian: Hamiltonian | None = None
    tables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def spacing(self) -> float:
        return self.lattice.spacing

    @property
    def directions(self) -> int:
        return len(self.stencil)

    @property
    def alpha(self) -> float:
        return self.hamiltonian.alpha if self.hamiltonian is not None else 1.0

    @property
    def cell_cost(self) -> float:
        """Spacing times alpha: the unit for all discretization tolerances."""
        return self.spacing * self.alpha

    @property
    def size(self) -> int:
        return self.lattice.size

    @property
    def controls(self) -> np.ndarray:
        return self.stencil / np.linalg.norm(self.stencil, axis=1, keepdims=True)

    @property
    def durations(self) -> np.ndarray:
        return self.spacing * np.linalg.norm(self.stencil, axis=1)

    @property
    def integral(self) -> bool:
        return bool(np.all(self.rates == np.round(self.rates)))

    def table(self, kind: str) -> np.ndarray:
        if kind not in self.tables:
            raise InputError(f"graph has no {kind!r} costs (built without a Hamiltonian?)")
        return self.tables[kind]

    def coords(self, idx) -> np.ndarray:
        return self.lattice.coords(idx)

    def nearest(self, points) -> np.ndarray:
        return self.lattice.nearest(points)

    def heads(self, nodes, s: int) -> np.ndarray:
        nodes = np.ascontiguousarray(np.atleast_1d(nodes), dtype=np.int64)
        return _kernels.heads(nodes, int(s), *self._geometry())

    def _geometry(self):
        lat = self.lattice
        return (
            np.asarray(lat.shape, dtype=np.int64),
            np.asarray(lat.lo, dtype=np.int64),
            self.group.m,
            self.stencil,
            self.rates,
        )

    def edges(self, nodes=None):
        """Explicit edge list ``(tail, head, s, cost_cc, cost_sigma)`` of live edges."""
        nodes = np.flatnonzero(self.mask) if nodes is None else np.asarray(nodes, dtype=np.int64)
        nodes = nodes[self.mask[nodes]]
        tails, hs, ss, pcs = [], [], [], []
        for s in range(self.directions):
            head = self.heads(nodes, s)
            ok = head >= 0
            ok[ok] &= self.mask[head[ok]]
            pc = self.piece[0, s] if self.piece.shape[0] == 1 else self.piece[nodes, s]
            pc = np.broadcast_to(pc, nodes.shape)
            ok &= pc != NO_EDGE
            tails.append(nodes[ok])
            hs.append(head[ok])
            ss.append(np.full(ok.sum(), s))
            pcs.append(pc[ok])
        tail, head, s, pc = (np.concatenate(a) for a in (tails, hs, ss, pcs))
        cc = self.tables["cc"][pc, s]
        sig = self.tables["sigma"][pc, s] if "sigma" in self.tables else np.full_like(cc, np.nan)
        return tail, head, s.astype(np.int64), cc, sig

    def connectivity(self, start: int | None = None) -> ConnectivityReport:
        from .search import shortest_distances

        live = np.flatnonzero(self.mask)
        if live.size == 0:
            return ConnectivityReport(0, 0)
        start = int(live[live.size // 2]) if start is None else int(start)
        d = shortest_distances(self, [start], kind="cc")
        return ConnectivityReport(int(live.size), int(np.isfinite(d.values).sum()))

    def key(self) -> str:
        blob = json.dumps(
            {
                "group": self.group.to_dict(),
                "domain": self.domain.to_dict(),
                "spacing": self.spacing,
                "stencil": self.stencil.tolist(),
                "hamiltonian": self.hamiltonian.to_dict() if self.hamiltonian else None,
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:24]

    def save(self, path) -> None:
        header = {
            "key": self.key(),
            "group": self.group.to_dict(),
            "domain": self.domain.to_dict(),
            "spacing": self.spacing,
            "lo": list(self.lattice.lo),
            "shape": list(self.lattice.shape),
            "tables": sorted(self.tables),
        }
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            hb = json.dumps(header, sort_keys=True).encode()
            fh.write(len(hb).to_bytes(8, "little"))
            fh.write(hb)
            for arr in (self.stencil, self.rates, self.mask, self.piece):
                np.save(fh, arr, allow_pickle=False)
            for name in header["tables"]:
                np.save(fh, self.tables[name], allow_pickle=False)

    @classmethod
    def load(cls, path, hamiltonian: Hamiltonian | None = None) -> "HorizontalGraph":
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise InputError(f"{path} is not a graph cache file")
            n = int.from_bytes(fh.read(8), "little")
            header = json.loads(fh.read(n))
            stencil, rates, mask, piece = (np.load(fh, allow_pickle=False) for _ in range(4))
            tables = {name: np.load(fh, allow_pickle=False) for name in header["tables"]}
        g = GroupSpec.from_dict(header["group"])
        lat = Lattice(g, header["spacing"], tuple(header["lo"]), tuple(header["shape"]))
        graph = cls(g, lat, DomainSpec.from_dict(header["domain"]), stencil, rates, mask, piece, hamiltonian, tables)
        if hamiltonian is not None and graph.key() != header["key"]:
            raise InputError("cached graph was built for a different Hamiltonian")
        return graph


def _uniform_piece(h: Hamiltonian | None, dom: DomainSpec) -> bool:
    if h is None:
        return True
    if len(h.all_pieces) != 1 or h.pieces[0].where is not None:
        return False
    if h.region is None or h.exterior is not None:
        return True
    reg = h.region
    return reg.interior is None and bool(np.all(reg.lows <= dom.lows) and np.all(reg.highs >= dom.highs))


def edge_pieces(g: GroupSpec, lat: Lattice, h: Hamiltonian, stencil: np.ndarray) -> np.ndarray:
    """Piece index at the midpoint of every (node, direction) edge."""
    N, S = lat.size, len(stencil)
    out = np.empty((N, S), dtype=np.uint8)
    half = np.zeros((S, g.n))
    half[:, : g.m] = 0.5 * lat.spacing * stencil
    if len(h.all_pieces) >= NO_EDGE:
        raise InputError("too many Hamiltonian pieces")
    for a in range(0, N, _CHUNK):
        idx = np.arange(a, min(N, a + _CHUNK))
        x = lat.coords(idx)
        for s in range(S):
            mid = group_mul(g, x, half[s])
            pc = h.piece_index(mid, strict=False)
            out[idx, s] = np.where(pc < 0, NO_EDGE, pc).astype(np.uint8)
    return out


def cost_tables(h: Hamiltonian | None, stencil: np.ndarray, spacing: float) -> dict:
    lengths = spacing * np.linalg.norm(stencil, axis=1)
    P = 1 if h is None else len(h.all_pieces)
    tables = {"cc": np.tile(lengths, (P, 1))}
    if h is not None:
        sig = np.empty((P, len(stencil)))
        for k, pc in enumerate(h.all_pieces):
            # tau * sigma*(c) = h * sigma*(A) by homogeneity
            sig[k] = spacing * pc.zset.support(-stencil.astype(float))
        tables["sigma"] = sig
    return tables


def build_graph(
    g: GroupSpec,
    dom: DomainSpec,
    spacing: float,
    directions: int = 16,
    hamiltonian: Hamiltonian | None = None,
) -> HorizontalGraph:
    """Horizontal graph over the lattice nodes of ``dom``.

    Nodes outside the interior predicate are masked out, which drops every
    edge touching them. With a Hamiltonian, each edge gets its sigma* cost
    from the piece that holds at the edge midpoint; edges whose midpoint the
    Hamiltonian does not cover are dropped.
    """
    if hamiltonian is not None and hamiltonian.m != g.m:
        raise InputError("Hamiltonian rank does not match the group")
    lat = Lattice.from_box(g, dom, spacing)
    stencil = make_stencil(g.m, directions)
    rates = second_layer_rates(g, stencil)
    if dom.interior is None:
        mask = np.ones(lat.size, dtype=bool)
    else:
        mask = np.zeros(lat.size, dtype=bool)
        for a in range(0, lat.size, _CHUNK):
            idx = np.arange(a, min(lat.size, a + _CHUNK))
            mask[idx] = dom.contains(lat.coords(idx))
    if not mask.any():
        raise InputError("domain contains no lattice node")
    if _uniform_piece(hamiltonian, dom):
        piece = np.zeros((1, len(stencil)), dtype=np.uint8)
    else:
        piece = edge_pieces(g, lat, hamiltonian, stencil)
    return HorizontalGraph(g, lat, dom, stencil, rates, mask, piece, hamiltonian, cost_tables(hamiltonian, stencil, spacing))


def cached_build(cache_dir, g, dom, spacing, directions=16, hamiltonian=None) -> HorizontalGraph:
    """``build_graph`` backed by a directory of cache files keyed by content hash."""
    probe = HorizontalGraph(
        g,
        Lattice.from_box(g, dom, spacing),
        dom,
        make_stencil(g.m, directions),
        np.zeros((0, 0, 0)),
        np.zeros(0, dtype=bool),
        np.zeros((1, 0), dtype=np.uint8),
        hamiltonian,
    )
    path = Path(cache_dir) / f"graph-{probe.key()}.bin"
    if path.exists():
        return HorizontalGraph.load(path, hamiltonian)
    graph = build_graph(g, dom, spacing, directions, hamiltonian)
    path.parent.mkdir(parents=True, exist_ok=True)
    graph.save(path)
    return graph
