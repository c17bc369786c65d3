"""Carnot group algebra in exponential coordinates adapted to the stratification.

Points are numpy arrays whose last axis has length ``n``; every operation
broadcasts over leading axes. Three group families are supported:

* ``abelian``    -- R^n with addition (step 1, rank n).
* ``heisenberg`` -- the first Heisenberg group, frame
  ``X1 = d/dx1 + x2 d/dt``, ``X2 = d/dx2 - x1 d/dt``.
* ``step2``      -- any step-2 group given by structure constants
  ``C[k, i, j]`` (antisymmetric in ``i, j``); the law is the truncated BCH
  series ``(x*y)^(2) = x^(2) + y^(2) + 1/2 [x^(1), y^(1)]``.

Heisenberg is coded separately from ``step2`` on purpose, so the two paths can
be checked against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputError

KINDS = ("abelian", "heisenberg", "step2")


@dataclass(frozen=True)
class GroupSpec:
    kind: str
    n: int
    m: int
    step: int
    layer_widths: tuple[int, ...]
    structure_constants: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown group kind {self.kind!r}")
        if self.step < 1 or len(self.layer_widths) != self.step:
            raise InputError("step must be >= 1 and match the number of layers")
        if self.layer_widths[0] != self.m or sum(self.layer_widths) != self.n:
            raise InputError("layer widths must start with m and sum to n")
        if self.kind == "heisenberg" and (self.n, self.m, self.step) != (3, 2, 2):
            raise InputError("Heisenberg1 has n=3, m=2, step 2")
        if self.kind == "step2":
            c = self.structure_constants
            if c is None or c.shape != (self.n - self.m, self.m, self.m):
                raise InputError("step2 needs structure constants of shape (n-m, m, m)")
            if not np.allclose(c, -np.swapaxes(c, 1, 2), atol=0.0, rtol=0.0):
                raise InputError("structure constants must be antisymmetric in the horizontal indices")

    @classmethod
    def abelian(cls, n: int) -> "GroupSpec":
        return cls("abelian", n, n, 1, (n,))

    @classmethod
    def heisenberg(cls) -> "GroupSpec":
        return cls("heisenberg", 3, 2, 2, (2, 1))

    @classmethod
    def step2(cls, structure_constants) -> "GroupSpec":
        c = np.array(structure_constants, dtype=float)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise InputError("structure constants must have shape (n-m, m, m)")
        c.setflags(write=False)
        m, n2 = c.shape[1], c.shape[0]
        return cls("step2", m + n2, m, 2, (m, n2), c)

    @classmethod
    def from_dict(cls, d: dict) -> "GroupSpec":
        kind = d.get("kind")
        if kind == "abelian":
            g = cls.abelian(int(d["n"]))
        elif kind == "heisenberg":
            g = cls.heisenberg()
        elif kind == "step2":
            g = cls.step2(d["structure_constants"])
        else:
            raise InputError(f"unknown group kind {kind!r}")
        for key, val in (("n", g.n), ("m", g.m), ("step", g.step)):
            if key in d and int(d[key]) != val:
                raise InputError(f"group field {key}={d[key]} inconsistent with kind {kind} ({val})")
        return g

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n, "m": self.m, "step": self.step}
        if self.structure_constants is not None:
            d["structure_constants"] = self.structure_constants.tolist()
        return d

    @property
    def layers(self) -> np.ndarray:
        """1-based layer of every coordinate."""
        return np.repeat(np.arange(1, self.step + 1), self.layer_widths)

    def layer_slices(self) -> list[slice]:
        ends = np.cumsum(self.layer_widths)
        starts = ends - np.asarray(self.layer_widths)
        return [slice(int(a), int(b)) for a, b in zip(starts, ends)]

    @property
    def bracket(self) -> np.ndarray:
        """Structure constants ``C[k, i, j]`` of the second layer (empty for step 1)."""
        if self.kind == "abelian":
            return np.zeros((0, self.m, self.m))
        if self.kind == "heisenberg":
            return np.array([[[0.0, -2.0], [2.0, 0.0]]])
        return np.asarray(self.structure_constants)


def _conform(g: GroupSpec, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0 or a.shape[-1] != g.n:
        raise InputError(f"point of shape {a.shape} does not conform to a group of dimension {g.n}")
    return a


def group_mul(g: GroupSpec, a, b) -> np.ndarray:
    a, b = _conform(g, a), _conform(g, b)
    out = a + b
    if g.kind == "heisenberg":
        out[..., 2] += a[..., 1] * b[..., 0] - a[..., 0] * b[..., 1]
    elif g.kind == "step2":
        m = g.m
        out[..., m:] += 0.5 * np.einsum("kij,...i,...j->...k", g.structure_constants, a[..., :m], b[..., :m])
    return out


def group_inv(g: GroupSpec, a) -> np.ndarray:
    return -_conform(g, a)


def dilate(g: GroupSpec, lam: float, a) -> np.ndarray:
    if not lam > 0:
        raise InputError("dilation factor must be positive")
    return _conform(g, a) * float(lam) ** g.layers


def koranyi_norm(g: GroupSpec, a) -> np.ndarray:
    """Homogeneous norm ``(sum_j |y^(j)|^(2k!/j))^(1/(2k!))``."""
    a = _conform(g, a)
    p = 2 * math.factorial(g.step)
    total = 0.0
    for j, sl in enumerate(g.layer_slices(), start=1):
        r = np.linalg.norm(a[..., sl], axis=-1)
        total = total + r ** (p // j)
    return total ** (1.0 / p)


def koranyi_dist(g: GroupSpec, a, b) -> np.ndarray:
    return koranyi_norm(g, group_mul(g, group_inv(g, a), b))


def frame_matrix(g: GroupSpec, x) -> np.ndarray:
    """Rows are the coordinates of X_1(x), ..., X_m(x)."""
    x = _conform(g, x)
    out = np.zeros(x.shape[:-1] + (g.m, g.n))
    out[..., :, : g.m] = np.eye(g.m)
    if g.kind == "heisenberg":
        out[..., 0, 2] = x[..., 1]
        out[..., 1, 2] = -x[..., 0]
    elif g.kind == "step2":
        # X_i^(2)_k = 1/2 sum_a C[k, a, i] x_a
        out[..., :, g.m :] = 0.5 * np.einsum("kai,...a->...ik", g.structure_constants, x[..., : g.m])
    return out


def horizontal_flow(g: GroupSpec, x, control, duration: float) -> np.ndarray:
    """Endpoint of gamma' = sum_i c_i X_i(gamma), gamma(0) = x, after ``duration``.

    For a constant control the flow is right translation by ``exp(duration * c)``,
    which in first-kind exponential coordinates is the point ``(duration*c, 0)``.
    """
    x = _conform(g, x)
    c = np.asarray(control, dtype=float)
    if c.shape[-1] != g.m:
        raise InputError("control must have m components")
    step = np.zeros(np.broadcast_shapes(x.shape[:-1], c.shape[:-1]) + (g.n,))
    step[..., : g.m] = duration * c
    return group_mul(g, x, step)


def horizontal_gradient_fd(g: GroupSpec, u: Callable, x, h: float) -> np.ndarray:
    """Central differences of ``u`` along the horizontal frame.

    ``u`` is any vectorised callable (a ``ScalarField`` or an analytic function of
    points). Component ``i`` is ``(u(x * h e_i) - u(x * (-h e_i))) / 2h``.
    Raises ``DomainError`` if ``u`` cannot be sampled at a neighbour.
    """
    if not h > 0:
        raise InputError("finite-difference step must be positive")
    x = _conform(g, x)
    pts = np.atleast_2d(x)
    grad = np.empty((pts.shape[0], g.m))
    for i in range(g.m):
        e = np.zeros(g.m)
        e[i] = 1.0
        fwd = horizontal_flow(g, pts, e, h)
        bwd = horizontal_flow(g, pts, -e, h)
        grad[:, i] = (np.asarray(u(fwd), dtype=float) - np.asarray(u(bwd), dtype=float)) / (2 * h)
    return grad[0] if x.ndim == 1 else grad
