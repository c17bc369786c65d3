"""Hamiltonians represented through their zero-sublevel sets Z(x).

The Monge theory only sees H through ``Z(x) = {p : H(x, p) <= 0}``, so a
Hamiltonian here is a finite list of pieces ``(predicate, ZSet)`` plus the
sandwich constant ``alpha``. The canonical value of H is the Minkowski gauge
of Z(x) minus one, and the induced sub-Finsler metric is

    sigma*(x, v) = sup { <-xi, v> : xi in Z(x) } = h_Z(-v),

with ``h_Z`` the support function of Z(x).
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .errors import DomainError, InputError
from .expr import Expression, parse_predicate
from .grid import DomainSpec


def _vec(p) -> np.ndarray:
    return np.atleast_2d(np.asarray(p, dtype=float))


def _out(res: np.ndarray, p) -> np.ndarray | float:
    return float(res[0]) if np.ndim(p) == 1 else res


class ZSet(ABC):
    """Closed convex body in R^m with the origin in its interior."""

    m: int

    @abstractmethod
    def support(self, v) -> np.ndarray:
        """h_Z(v) = sup <xi, v> over xi in Z."""

    @abstractmethod
    def gauge(self, p) -> np.ndarray:
        """Minkowski gauge inf{t > 0 : p in t Z}."""

    @abstractmethod
    def inradius(self) -> float: ...

    @abstractmethod
    def circumradius(self) -> float: ...

    @abstractmethod
    def to_dict(self) -> dict: ...

    def sigma_star(self, v):
        return _out(self.support(-_vec(v)), v)

    def contains(self, p) -> np.ndarray:
        return self.gauge(_vec(p)) <= 1.0


@dataclass(frozen=True)
class Ball(ZSet):
    r: float
    m: int = 2

    def __post_init__(self):
        if not self.r > 0:
            raise InputError("ball radius must be positive")

    def support(self, v):
        return self.r * np.linalg.norm(_vec(v), axis=1)

    def gauge(self, p):
        return np.linalg.norm(_vec(p), axis=1) / self.r

    def inradius(self):
        return self.r

    def circumradius(self):
        return self.r

    def to_dict(self):
        return {"kind": "ball", "r": self.r}


@dataclass(frozen=True, eq=False)
class Ellipsoid(ZSet):
    """Z = {p : p^T A p <= 1} for symmetric positive-definite A."""

    matrix: np.ndarray

    def __post_init__(self):
        a = np.array(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.allclose(a, a.T):
            raise InputError("ellipsoid matrix must be square and symmetric")
        eig = np.linalg.eigvalsh(a)
        if eig[0] <= 0:
            raise InputError("ellipsoid matrix must be positive definite")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "_inv", np.linalg.inv(a))
        object.__setattr__(self, "_eig", eig)

    @property
    def m(self):
        return self.matrix.shape[0]

    def support(self, v):
        v = _vec(v)
        return np.sqrt(np.einsum("ki,ij,kj->k", v, self._inv, v))

    def gauge(self, p):
        p = _vec(p)
        return np.sqrt(np.einsum("ki,ij,kj->k", p, self.matrix, p))

    def inradius(self):
        return float(1.0 / np.sqrt(self._eig[-1]))

    def circumradius(self):
        return float(1.0 / np.sqrt(self._eig[0]))

    def to_dict(self):
        return {"kind": "ellipsoid", "matrix": self.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class Polytope(ZSet):
    """Convex hull of ``vertices``; the origin must be an interior point."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if v.shape[1] == 1:
            lo, hi = v.min(), v.max()
            normals, offsets = np.array([[1.0], [-1.0]]), np.array([-hi, lo])
        else:
            try:
                hull = ConvexHull(v)
            except Exception as exc:  # qhull raises its own error type
                raise InputError(f"degenerate polytope: {exc}") from exc
            normals, offsets = hull.equations[:, :-1], hull.equations[:, -1]
        # facets: normals @ p + offsets <= 0, unit normals
        scale = np.linalg.norm(normals, axis=1)
        normals, offsets = normals / scale[:, None], offsets / scale
        if np.any(offsets >= 0):
            raise InputError("the origin must lie in the interior of the polytope")
        object.__setattr__(self, "_normals", normals)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def m(self):
        return self.vertices.shape[1]

    def support(self, v):
        return np.max(_vec(v) @ self.vertices.T, axis=1)

    def gauge(self, p):
        vals = (_vec(p) @ self._normals.T) / (-self._offsets)
        return np.maximum(np.max(vals, axis=1), 0.0)

    def inradius(self):
        return float(np.min(-self._offsets))

    def circumradius(self):
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def facet_normal_at_inradius(self) -> np.ndarray:
        return self._normals[np.argmin(-self._offsets)]

    def to_dict(self):
        return {"kind": "polytope", "vertices": self.vertices.tolist()}


@dataclass(frozen=True, eq=False)
class Scaled(ZSet):
    base: ZSet
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise InputError("scale factor must be positive")

    @property
    def m(self):
        return self.base.m

    def support(self, v):
        return self.factor * self.base.support(v)

    def gauge(self, p):
        return self.base.gauge(p) / self.factor

    def inradius(self):
        return self.factor * self.base.inradius()

    def circumradius(self):
        return self.factor * self.base.circumradius()

    def to_dict(self):
        return {"kind": "scaled", "base": self.base.to_dict(), "factor": self.factor}


def zset_from_dict(d: dict, m: int) -> ZSet:
    kind = d.get("kind")
    if kind == "ball":
        return Ball(float(d["r"]), m)
    if kind == "ellipsoid":
        z = Ellipsoid(np.asarray(d["matrix"], dtype=float))
    elif kind == "polytope":
        z = Polytope(np.asarray(d["vertices"], dtype=float))
    elif kind == "scaled":
        z = Scaled(zset_from_dict(d["base"], m), float(d["factor"]))
    else:
        raise InputError(f"unknown zset kind {kind!r}")
    if z.m != m:
        raise InputError(f"zset lives in R^{z.m} but the group has rank {m}")
    return z


@dataclass(frozen=True)
class Piece:
    zset: ZSet
    where: Expression | None = None

    def to_dict(self) -> dict:
        d = {"zset": self.zset.to_dict()}
        if self.where is not None:
            d["where"] = self.where.text
        return d


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Piecewise-in-x Hamiltonian.

    ``pieces`` apply on ``region`` (everywhere if ``region`` is None); the first
    piece whose predicate holds wins. ``exterior`` pieces, when present, make the
    Hamiltonian global by covering the complement of ``region``.
    """

    alpha: float
    pieces: tuple[Piece, ...]
    m: int
    region: DomainSpec | None = None
    exterior: tuple[Piece, ...] | None = None
    tag: str = "global"

    def __post_init__(self):
        if not self.alpha > 1:
            raise InputError("alpha must exceed 1")
        if not self.pieces:
            raise InputError("a Hamiltonian needs at least one piece")
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if self.exterior is not None:
            object.__setattr__(self, "exterior", tuple(self.exterior))
        for pc in self.all_pieces:
            if pc.zset.m != self.m:
                raise InputError("all zsets must live in R^m")

    @classmethod
    def uniform(cls, zset: ZSet, alpha: float, **kw) -> "Hamiltonian":
        return cls(alpha, (Piece(zset),), zset.m, **kw)

    @classmethod
    def from_dict(cls, d: dict, m: int, region: DomainSpec | None = None) -> "Hamiltonian":
        def pieces(items):
            out = []
            for it in items:
                where = it.get("where")
                out.append(Piece(zset_from_dict(it["zset"], m), parse_predicate(where) if where else None))
            return tuple(out)

        if "pieces" not in d:
            raise InputError("hamiltonian needs a 'pieces' list")
        return cls(float(d["alpha"]), pieces(d["pieces"]), m, region, None, d.get("tag", "omega" if region else "global"))

    def to_dict(self) -> dict:
        d = {"alpha": self.alpha, "pieces": [p.to_dict() for p in self.pieces], "tag": self.tag}
        if self.region is not None:
            d["region"] = self.region.to_dict()
        if self.exterior is not None:
            d["exterior"] = [p.to_dict() for p in self.exterior]
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def all_pieces(self) -> tuple[Piece, ...]:
        return self.pieces + (self.exterior or ())

    @property
    def is_global(self) -> bool:
        return self.region is None or self.exterior is not None

    @property
    def is_uniform(self) -> bool:
        """Single piece, no predicate, no exterior: Z does not depend on x."""
        return len(self.all_pieces) == 1 and self.pieces[0].where is None

    def piece_index(self, points, strict: bool = True) -> np.ndarray:
        """Index into ``all_pieces`` of the piece governing each point.

        Points not covered give ``-1`` when ``strict`` is False and raise
        ``DomainError`` otherwise.
        """
        pts = _vec(points)
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        inside = np.ones(pts.shape[0], dtype=bool) if self.region is None else self.region.contains(pts)
        self._assign(out, pts, inside, self.pieces, 0)
        if self.exterior is not None:
            self._assign(out, pts, ~inside, self.exterior, len(self.pieces))
        if strict and np.any(out < 0):
            raise DomainError("point outside the Hamiltonian's domain")
        return out

    @staticmethod
    def _assign(out, pts, eligible, pieces, offset):
        todo = eligible & (out < 0)
        for k, pc in enumerate(pieces):
            if not np.any(todo):
                break
            hit = todo.copy()
            if pc.where is not None:
                hit[todo] = pc.where(pts[todo])
            out[hit] = offset + k
            todo &= ~hit

    def zmap(self, x) -> ZSet:
        return self.all_pieces[int(self.piece_index(_vec(x))[0])].zset


def _per_row(h: Hamiltonian, x, v, fn):
    xs, vs = _vec(x), _vec(v)
    if vs.shape[1] != h.m:
        raise InputError(f"vector has {vs.shape[1]} components, expected {h.m}")
    rows = max(xs.shape[0], vs.shape[0])
    if xs.shape[0] not in (1, rows) or vs.shape[0] not in (1, rows):
        raise InputError("point and vector batches do not broadcast")
    idx = np.broadcast_to(h.piece_index(xs), (rows,))
    vs = np.broadcast_to(vs, (rows, h.m))
    res = np.empty(rows)
    for k in np.unique(idx):
        sel = idx == k
        res[sel] = fn(h.all_pieces[k].zset, vs[sel])
    single = np.ndim(x) == 1 and np.ndim(v) == 1
    return float(res[0]) if single else res


def eval_H(h: Hamiltonian, x, p):
    """Gauge representative ``mu_{Z(x)}(p) - 1`` (broadcasts over rows)."""
    return _per_row(h, x, p, lambda z, q: z.gauge(q) - 1.0)


def sigma_star(h: Hamiltonian, x, v):
    """sigma*(x, v) = sup{<-xi, v> : xi in Z(x)} (broadcasts over rows)."""
    return _per_row(h, x, v, lambda z, w: z.support(-w))


def probe_directions(m: int, count: int = 64) -> np.ndarray:
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # deterministic spread on higher spheres
    d = np.random.default_rng(0).standard_normal((count, m))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass
class Violation:
    point: np.ndarray
    side: str  # "inner" (Z too small) or "outer" (Z too large)
    direction: np.ndarray
    radius: float


@dataclass
class ValidationReport:
    alpha: float
    checked: int
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.passed:
            return f"(H3) sandwich holds at {self.checked} samples for alpha={self.alpha}"
        v = self.violations[0]
        return (
            f"{len(self.violations)} violation(s); first at {v.point.tolist()}: {v.side} radius "
            f"{v.radius:.6g} along {np.round(v.direction, 6).tolist()}"
        )


def validate_H(h: Hamiltonian, samples, directions: int = 64) -> ValidationReport:
    """Check 1/alpha <= radial extent of Z(x) <= alpha at each sample.

    Closedness and convexity hold by construction of the ZSet types; the
    sandwich is probed along ``directions`` evenly spread unit vectors and
    confirmed with the exact in/circumradius of each ZSet.
    """
    pts = _vec(samples)
    if pts.shape[0] == 0:
        raise InputError("validate_H needs at least one sample")
    dirs = probe_directions(h.m, directions)
    lo, hi = 1.0 / h.alpha, h.alpha
    eps = 1e-12
    report = ValidationReport(h.alpha, pts.shape[0])
    idx = h.piece_index(pts)
    for k in np.unique(idx):
        z = h.all_pieces[k].zset
        radial = 1.0 / z.gauge(dirs)
        where = pts[np.argmax(idx == k)]
        bad_in = np.flatnonzero(radial < lo - eps)
        bad_out = np.flatnonzero(radial > hi + eps)
        if bad_in.size:
            j = bad_in[np.argmin(radial[bad_in])]
            report.violations.append(Violation(where, "inner", dirs[j], float(radial[j])))
        elif z.inradius() < lo - eps:
            d = z.facet_normal_at_inradius() if isinstance(z, Polytope) else dirs[np.argmin(radial)]
            report.violations.append(Violation(where, "inner", d, z.inradius()))
        if bad_out.size:
            j = bad_out[np.argmax(radial[bad_out])]
            report.violations.append(Violation(where, "outer", dirs[j], float(radial[j])))
        elif z.circumradius() > hi + eps:
            report.violations.append(Violation(where, "outer", dirs[np.argmax(radial)], z.circumradius()))
    return report


def extend(h: Hamiltonian, omega: DomainSpec | None = None, exterior=None) -> Hamiltonian:
    """Member of K(H, omega): H inside omega, ``exterior`` (default Ball(alpha)) outside."""
    omega = omega if omega is not None else h.region
    if omega is None:
        raise InputError("extension needs the domain the Hamiltonian lives on")
    if h.region is not None and h.region != omega:
        raise InputError("the Hamiltonian is defined on a different domain")
    ext = tuple(exterior) if exterior is not None else (Piece(Ball(h.alpha, h.m)),)
    return Hamiltonian(h.alpha, h.pieces, h.m, omega, ext, "global")
