"""CSV / JSON artifacts. Floats use 17 significant digits so they round-trip."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path} is empty")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from exc
    return rows[0], data.reshape(-1, len(rows[0]))


def coord_names(n: int) -> list[str]:
    return [f"y{i}" for i in range(1, n + 1)]


def write_distance_field(path, field, nodes=None) -> Path:
    g = field.graph
    nodes = np.flatnonzero(g.mask) if nodes is None else np.asarray(nodes)
    pts = g.coords(nodes)
    rows = ([int(k), *p, v] for k, p, v in zip(nodes, pts, field.values[nodes]))
    return write_csv(path, ["node_index", *coord_names(g.group.n), "value"], rows)


def write_path(path, points, cumcost) -> Path:
    n = np.asarray(points).shape[1]
    rows = ([k, *p, c] for k, (p, c) in enumerate(zip(points, cumcost)))
    return write_csv(path, ["step", *coord_names(n), "cumcost"], rows)


def write_field(path, scalar, name: str = "w") -> Path:
    nodes = np.flatnonzero(scalar.support)
    pts = scalar.lattice.coords(nodes)
    rows = ([*p, v] for p, v in zip(pts, scalar.values[nodes]))
    return write_csv(path, [*coord_names(scalar.lattice.group.n), name], rows)


def read_boundary_csv(path, n: int):
    from .hopflax import BoundaryDatum

    header, data = read_csv(path)
    if header != [*coord_names(n), "g"]:
        raise InputError(f"{path}: expected columns {coord_names(n) + ['g']}, got {header}")
    return BoundaryDatum(data[:, :n], data[:, n], "tabulated")


def write_boundary_csv(path, datum) -> Path:
    n = datum.points.shape[1]
    rows = ([*p, v] for p, v in zip(datum.points, datum.values))
    return write_csv(path, [*coord_names(n), "g"], rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable and explicit
        return v if math.isfinite(v) else fmt(v)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def canonical_hash(obj) -> str:
    blob = json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
