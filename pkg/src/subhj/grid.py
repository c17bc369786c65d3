"""Lattices adapted to the group dilations, box domains, and sampled fields.

A coordinate in layer ``j`` lives on the lattice ``h**j * Z``; nodes are stored
in C order over a box of absolute lattice indices ``lo .. lo + shape - 1``.
Anchoring the lattice at the group identity keeps horizontal moves between
nodes exact for the Heisenberg group.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .carnot import GroupSpec
from .errors import DomainError, InputError
from .expr import Expression, parse_predicate

_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class DomainSpec:
    """Closed box, optionally cut down by an interior predicate."""

    box: tuple[tuple[float, float], ...]
    interior: Expression | None = None
    boundary_resolution: int = 1

    def __post_init__(self):
        box = tuple((float(a), float(b)) for a, b in self.box)
        if not box or any(not a <= b for a, b in box):
            raise InputError(f"box must be a nonempty list of [lo, hi] intervals, got {self.box}")
        object.__setattr__(self, "box", box)
        if isinstance(self.interior, str):
            object.__setattr__(self, "interior", parse_predicate(self.interior))
        if int(self.boundary_resolution) < 1:
            raise InputError("boundary_resolution must be a positive integer")

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        return cls(
            tuple(tuple(iv) for iv in d["box"]),
            d.get("interior"),
            int(d.get("boundary_resolution", 1)),
        )

    def to_dict(self) -> dict:
        d = {"box": [list(iv) for iv in self.box], "boundary_resolution": self.boundary_resolution}
        if self.interior is not None:
            d["interior"] = self.interior.text
        return d

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def lows(self) -> np.ndarray:
        return np.array([a for a, _ in self.box])

    @property
    def highs(self) -> np.ndarray:
        return np.array([b for _, b in self.box])

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise InputError(f"points have {pts.shape[1]} coords, domain has {self.dim}")
        tol = _SNAP_TOL * np.maximum(1.0, np.abs(self.highs - self.lows))
        inside = np.all((pts >= self.lows - tol) & (pts <= self.highs + tol), axis=1)
        if self.interior is not None:
            inside &= self.interior(pts)
        return inside

    def expanded(self, margins) -> "DomainSpec":
        margins = np.broadcast_to(np.asarray(margins, dtype=float), (self.dim,))
        return DomainSpec(tuple(zip(self.lows - margins, self.highs + margins)))

    def first_layer_diameter(self, g: GroupSpec) -> float:
        widths = (self.highs - self.lows)[: g.m]
        return float(np.linalg.norm(widths))


@dataclass(frozen=True)
class Lattice:
    group: GroupSpec
    spacing: float
    lo: tuple[int, ...]
    shape: tuple[int, ...]

    @classmethod
    def from_box(cls, group: GroupSpec, box: DomainSpec, spacing: float) -> "Lattice":
        if not spacing > 0:
            raise InputError("spacing must be positive")
        if box.dim != group.n:
            raise InputError(f"domain has {box.dim} coords, group has {group.n}")
        steps = float(spacing) ** group.layers
        lo = np.ceil(box.lows / steps - _SNAP_TOL).astype(np.int64)
        hi = np.floor(box.highs / steps + _SNAP_TOL).astype(np.int64)
        shape = hi - lo + 1
        if np.any(shape < 1):
            raise InputError("domain box contains no lattice node at this spacing")
        return cls(group, float(spacing), tuple(int(v) for v in lo), tuple(int(v) for v in shape))

    @property
    def steps(self) -> np.ndarray:
        return self.spacing ** self.group.layers

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> np.ndarray:
        s = np.ones(len(self.shape), dtype=np.int64)
        for i in range(len(self.shape) - 2, -1, -1):
            s[i] = s[i + 1] * self.shape[i + 1]
        return s

    def multi_index(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        return np.stack(np.unravel_index(idx, self.shape), axis=-1)

    def flat_index(self, multi) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.moveaxis(np.asarray(multi), -1, 0)), self.shape)

    def coords(self, idx) -> np.ndarray:
        return (self.multi_index(idx) + np.asarray(self.lo)) * self.steps

    def all_coords(self) -> np.ndarray:
        return self.coords(np.arange(self.size))

    def nearest(self, points) -> np.ndarray:
        """Flat index of the node nearest (coordinatewise) to each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = np.rint(pts / self.steps).astype(np.int64) - np.asarray(self.lo)
        if np.any(rel < 0) or np.any(rel >= np.asarray(self.shape)):
            raise DomainError("point outside the lattice box")
        return self.flat_index(rel)

    def axis_neighbours_mask(self, mask: np.ndarray) -> np.ndarray:
        """Nodes of ``mask`` with at least one axis neighbour outside ``mask``."""
        m = mask.reshape(self.shape)
        edge = np.zeros_like(m)
        for ax in range(m.ndim):
            if self.shape[ax] == 1:
                continue
            sl_lo = [slice(None)] * m.ndim
            sl_hi = [slice(None)] * m.ndim
            sl_lo[ax], sl_hi[ax] = slice(0, -1), slice(1, None)
            # neighbour in +ax missing
            out_hi = np.ones_like(m)
            out_hi[tuple(sl_lo)] = ~m[tuple(sl_hi)]
            out_lo = np.ones_like(m)
            out_lo[tuple(sl_hi)] = ~m[tuple(sl_lo)]
            edge |= out_hi | out_lo
        return (edge & m).ravel()

    def dilate(self, mask: np.ndarray) -> np.ndarray:
        """``mask`` grown by one axis step in every direction."""
        m = mask.reshape(self.shape)
        out = m.copy()
        for ax in range(m.ndim):
            lo = [slice(None)] * m.ndim
            hi = [slice(None)] * m.ndim
            lo[ax], hi[ax] = slice(0, -1), slice(1, None)
            out[tuple(lo)] |= m[tuple(hi)]
            out[tuple(hi)] |= m[tuple(lo)]
        return out.ravel()

    def domain_masks(self, domain: DomainSpec) -> tuple[np.ndarray, np.ndarray]:
        """(closure, boundary) node masks of ``domain`` on this lattice."""
        closure = domain.contains(self.all_coords())
        boundary = self.axis_neighbours_mask(closure)
        return closure, boundary

    def boundary_nodes(self, domain: DomainSpec) -> np.ndarray:
        _, boundary = self.domain_masks(domain)
        idx = np.flatnonzero(boundary)
        return idx[:: domain.boundary_resolution]


@dataclass
class ScalarField:
    """Node values on a lattice with multilinear interpolation in coordinates.

    ``values`` is NaN off the field's support. ``boundary`` optionally marks the
    nodes that sample the domain boundary.
    """

    lattice: Lattice
    values: np.ndarray
    boundary: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.lattice.size,):
            raise InputError("values must have one entry per lattice node")

    @classmethod
    def from_function(cls, lattice: Lattice, fn: Callable, support: np.ndarray | None = None, **kw):
        vals = np.asarray(fn(lattice.all_coords()), dtype=float)
        vals = np.broadcast_to(vals, (lattice.size,)).copy()
        if support is not None:
            vals[~support] = np.nan
        return cls(lattice, vals, **kw)

    @property
    def support(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def interior(self) -> np.ndarray:
        sup = self.support
        return sup if self.boundary is None else sup & ~self.boundary

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        lat = self.lattice
        shape = np.asarray(lat.shape)
        pos = pts / lat.steps - np.asarray(lat.lo)
        if np.any(pos < -_SNAP_TOL) or np.any(pos > shape - 1 + _SNAP_TOL):
            raise DomainError("interpolation point outside the lattice box")
        pos = np.clip(pos, 0, shape - 1)
        base = np.minimum(np.floor(pos).astype(np.int64), np.maximum(shape - 2, 0))
        frac = pos - base
        active = np.flatnonzero(shape > 1)
        out = np.zeros(pts.shape[0])
        bad = np.zeros(pts.shape[0], dtype=bool)
        grid_vals = self.values.reshape(lat.shape)
        for corner in itertools.product((0, 1), repeat=len(active)):
            idx = base.copy()
            w = np.ones(pts.shape[0])
            for ax, bit in zip(active, corner):
                idx[:, ax] += bit
                w *= frac[:, ax] if bit else 1.0 - frac[:, ax]
            v = grid_vals[tuple(idx.T)]
            used = w > 0
            bad |= used & np.isnan(v)
            out += np.where(used, w * np.where(np.isnan(v), 0.0, v), 0.0)
        if np.any(bad):
            raise DomainError("interpolation stencil leaves the field's support")
        return out[0] if single else out

    def node_values(self, idx) -> np.ndarray:
        return self.values[np.asarray(idx)]
