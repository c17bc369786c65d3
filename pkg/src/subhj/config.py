"""Run configuration: JSON file, schema validation, object construction."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .carnot import GroupSpec
from .errors import InputError
from .expr import parse_predicate
from .grid import DomainSpec
from .hamiltonian import Hamiltonian, Piece, extend, zset_from_dict
from .io import canonical_hash

TASKS = ("distance", "solve", "verify", "compare", "stability", "probe")


def load_schema() -> dict:
    text = resources.files("subhj").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError as exc:
            raise InputError(f"config file {path} not found") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(raw, overrides, path.resolve().parent)

    @classmethod
    def from_dict(cls, raw: dict, overrides: dict | None = None, base_dir=None) -> "RunConfig":
        raw = copy.deepcopy(raw)
        for key, val in (overrides or {}).items():
            if val is None:
                continue
            if key == "spacing":
                raw.setdefault("grid", {})["spacing"] = float(val)
            else:
                raw[key] = val
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise InputError(f"config invalid at {where}: {exc.message}") from exc
        return cls(raw, Path(base_dir) if base_dir is not None else Path.cwd())

    @property
    def task(self) -> str | None:
        return self.raw.get("task")

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def params(self) -> dict:
        return self.raw.get("params", {})

    @property
    def output(self) -> Path | None:
        out = self.raw.get("output")
        return None if out is None else Path(out)

    @property
    def spacing(self) -> float:
        return float(self.raw["grid"]["spacing"])

    @property
    def directions(self) -> int:
        return int(self.raw["grid"].get("stencil_directions", 16))

    @property
    def margin(self):
        return self.raw["grid"].get("margin")

    @property
    def cache_dir(self) -> Path | None:
        c = self.raw["grid"].get("cache_dir")
        return None if c is None else self.resolve(c)

    def digest(self) -> str:
        return canonical_hash(self.raw)

    def resolve(self, rel) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def group(self) -> GroupSpec:
        return GroupSpec.from_dict(self.raw["group"])

    def domain(self) -> DomainSpec:
        dom = DomainSpec.from_dict(self.raw["domain"])
        if dom.dim != self.group().n:
            raise InputError(f"domain box has {dom.dim} intervals, group dimension is {self.group().n}")
        return dom

    def hamiltonian(self, spec: dict | None = None) -> Hamiltonian:
        spec = self.raw["hamiltonian"] if spec is None else spec
        return Hamiltonian.from_dict(spec, self.group().m, self.domain())

    def extension(self, h: Hamiltonian | None = None) -> Hamiltonian:
        h = self.hamiltonian() if h is None else h
        ext = self.raw["hamiltonian"].get("extension")
        if ext is None:
            return extend(h, self.domain())
        pieces = tuple(
            Piece(zset_from_dict(p["zset"], h.m), parse_predicate(p["where"]) if "where" in p else None)
            for p in ext["exterior"]
        )
        return extend(h, self.domain(), pieces)

    def domain_samples(self, count: int = 64) -> np.ndarray:
        """Seeded points of the domain (box samples filtered by the predicate)."""
        dom = self.domain()
        rng = np.random.default_rng(self.seed)
        pts = rng.uniform(dom.lows, dom.highs, size=(16 * count, dom.dim))
        pts = pts[dom.contains(pts)]
        if pts.shape[0] == 0:
            raise InputError("the domain predicate rejects every sample")
        return pts[:count]
