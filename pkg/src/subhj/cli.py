"""Command-line front end: one task per invocation, artifacts plus a manifest.

Exit status: 0 success, 1 task failure, 2 parse error, 3 validation failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import platform
import sys
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .config import TASKS, RunConfig
from .errors import CompatibilityError, InputError, SubHJError
from .grid import Lattice, ScalarField
from .hamiltonian import Hamiltonian, validate_H
from .hopflax import (
    BoundaryDatum,
    check_bcc,
    extended_graph,
    random_ordered_formulas,
    resolve_margin,
    solve_dirichlet,
)
from .io import (
    file_digest,
    read_boundary_csv,
    write_csv,
    write_distance_field,
    write_field,
    write_json,
    write_path,
)
from .metric import build_graph, cached_build, extract_path, shortest_distances
from .metric.probe import convergence_probe, loglog_slope
from .metric.search import snap
from .verify import ae_subsolution_check, comparison_harness, default_radii, monge_residuals, stability_harness

EXIT_OK, EXIT_TASK, EXIT_PARSE, EXIT_INVALID = 0, 1, 2, 3


class TaskFailure(SubHJError):
    """The task ran but its verdict is negative."""


class ValidationFailure(SubHJError):
    pass


_BOUNDARY = {
    "oneOf": [
        {"type": "string"},
        {"type": "object", "required": ["formula"], "additionalProperties": False,
         "properties": {"formula": {"type": "string"}}},
        {"type": "object", "required": ["csv"], "additionalProperties": False,
         "properties": {"csv": {"type": "string"}}},
    ]
}
_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_PROBES = {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "array", "items": _POINT, "minItems": 1}]}
_BOX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}
_RADII = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}
_POS = {"type": "number", "exclusiveMinimum": 0}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


PARAM_SCHEMAS = {
    "distance": _obj(
        {
            "sources": {"type": "array", "items": _POINT, "minItems": 1},
            "kind": {"enum": ["cc", "sigma", "koranyi"]},
            "reverse": {"type": "boolean"},
            "extended": {"type": "boolean"},
            "path_to": _POINT,
        },
        ["sources"],
    ),
    "solve": _obj({"boundary": _BOUNDARY, "override": {"type": "boolean"}}),
    "verify": _obj(
        {
            "field": {"oneOf": [{"const": "solve"}, _obj({"cone": _POINT}, ["cone"])]},
            "boundary": _BOUNDARY,
            "probes": _PROBES,
            "probe_box": _BOX,
            "radii": _RADII,
            "tau": _POS,
            "expect": {"enum": ["solution", "subsolution", "supersolution"]},
            "ae": _obj({"h_fd": _POS, "tau_fd": _POS, "fraction": {"type": "number", "minimum": 0, "maximum": 1}}),
        }
    ),
    "compare": _obj(
        {
            "lower": _BOUNDARY,
            "upper": _BOUNDARY,
            "upper_hamiltonian": {"type": "object"},
            "random_pairs": {"type": "integer", "minimum": 1},
            "lipschitz": _POS,
            "tol": _POS,
        }
    ),
    "stability": _obj(
        {
            "family": _obj(
                {"kind": {"const": "ball"}, "r": _POS, "n": {"type": "array", "items": {"type": "integer", "minimum": 1}}},
                ["n"],
            ),
            "sequence": {"type": "array", "items": {"type": "object"}, "minItems": 1},
            "limit": {"type": "object"},
            "boundary": _BOUNDARY,
            "pairs": {"type": "integer", "minimum": 1},
            "probes": _PROBES,
            "probe_box": _BOX,
            "radii": _RADII,
            "max_ratio": _POS,
        }
    ),
    "probe": _obj(
        {
            "pairs": {"type": "array", "items": {"type": "array", "items": _POINT, "minItems": 2, "maxItems": 2}},
            "scaling": _obj(
                {"origin": _POINT, "direction": _POINT, "scales": {"type": "array", "items": _POS, "minItems": 2}},
                ["origin", "direction", "scales"],
            ),
            "spacings": {"type": "array", "items": _POS, "minItems": 1},
            "kind": {"enum": ["cc", "sigma"]},
        }
    ),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="subhj", description="Optical-length distances and Hopf-Lax solutions on Carnot groups.")
    p.add_argument("--version", action="version", version=f"subhj {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in TASKS:
        sp = sub.add_parser(name, help=f"run the {name} task")
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (default: config 'output' or ./subhj-out)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--spacing", type=float, help="override grid.spacing")
    return p


def _versions() -> dict:
    out = {"subhj": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


class Run:
    """State of one invocation: config, output directory, produced files."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.produced: list[Path] = []
        self.summary: dict = {}
        self.rng = np.random.default_rng(cfg.seed)
        try:
            jsonschema.validate(cfg.params, PARAM_SCHEMAS[cfg.task])
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<params>"
            raise InputError(f"params invalid for {cfg.task} at {where}: {exc.message}") from exc
        self.group = cfg.group()
        self.omega = cfg.domain()
        self.H = cfg.hamiltonian()
        self.K = cfg.extension(self.H)

    # -- helpers -----------------------------------------------------------

    def emit(self, path: Path) -> Path:
        self.produced.append(path)
        return path

    def validate(self):
        rep = validate_H(self.H, self.cfg.domain_samples(64))
        if not rep.passed:
            raise ValidationFailure(rep.summary())
        return rep

    def domain_graph(self, H: Hamiltonian | None = None):
        H = self.H if H is None else H
        args = (self.group, self.omega, self.cfg.spacing, self.cfg.directions, H)
        if self.cfg.cache_dir is not None:
            self.cfg.cache_dir.mkdir(parents=True, exist_ok=True)
            return cached_build(self.cfg.cache_dir, *args)
        return build_graph(*args)

    def datum(self, spec, lattice: Lattice) -> BoundaryDatum:
        spec = "0" if spec is None else spec
        if isinstance(spec, str):
            return BoundaryDatum.from_formula(lattice, self.omega, spec)
        if "formula" in spec:
            return BoundaryDatum.from_formula(lattice, self.omega, spec["formula"])
        return read_boundary_csv(self.cfg.resolve(spec["csv"]), self.group.n)

    def omega_lattice(self) -> Lattice:
        return Lattice.from_box(self.group, self.omega, self.cfg.spacing)

    def margin(self, Ks, oscillation: float) -> float:
        """One numeric margin covering every extension in ``Ks`` (so all share a lattice)."""
        return max(
            resolve_margin(self.group, self.omega, K, self.cfg.spacing, self.cfg.directions, self.cfg.margin, oscillation)
            for K in Ks
        )

    def graph_for(self, K: Hamiltonian, margin: float):
        return extended_graph(self.group, self.omega, K, self.cfg.spacing, self.cfg.directions, margin=margin, K=K)[0]

    def solve(self, K: Hamiltonian, datum: BoundaryDatum, margin: float, override: bool = False, graph=None):
        graph = self.graph_for(K, margin) if graph is None else graph
        bcc = check_bcc(graph, K, datum)
        return solve_dirichlet(graph, K, datum, self.omega, bcc, override=override), graph

    def extension_of(self, spec: dict) -> tuple[Hamiltonian, Hamiltonian]:
        H = self.cfg.hamiltonian(spec)
        return H, self.cfg.extension(H)

    def sample_points(self, spec, box=None) -> np.ndarray:
        """Explicit points, or ``spec`` seeded samples in ``box`` (default: central half of omega)."""
        if not isinstance(spec, int):
            return np.asarray(spec, dtype=float)
        if box is None:
            c, w = 0.5 * (self.omega.lows + self.omega.highs), self.omega.highs - self.omega.lows
            lo, hi = c - 0.25 * w, c + 0.25 * w
        else:
            box = np.asarray(box, dtype=float)
            lo, hi = box[:, 0], box[:, 1]
        pts = np.empty((0, self.group.n))
        while pts.shape[0] < spec:
            cand = self.rng.uniform(lo, hi, size=(4 * spec, self.group.n))
            pts = np.vstack([pts, cand[self.omega.contains(cand)]])
        return pts[:spec]

    def radii(self, params) -> list[float]:
        if "radii" in params:
            return [float(r) for r in params["radii"]]
        w = float(np.min((self.omega.highs - self.omega.lows)[: self.group.m]))
        return default_radii(0.2 * w)

    # -- tasks -------------------------------------------------------------

    def task_distance(self, p):
        kind = p.get("kind", "sigma")
        graph = extended_graph(self.group, self.omega, self.H, self.cfg.spacing, self.cfg.directions,
                               self.cfg.margin, self.K)[0] if p.get("extended") else self.domain_graph()
        sources = [snap(graph, x) for x in p["sources"]]
        field = shortest_distances(graph, sources, kind, reverse=bool(p.get("reverse", False)))
        self.emit(write_distance_field(self.out / "distance.csv", field))
        if "path_to" in p:
            nodes, pts, cum = extract_path(field, snap(graph, p["path_to"]))
            self.emit(write_path(self.out / "path.csv", pts, cum))
            self.summary["path_cost"] = float(cum[-1]) if len(cum) else None
        self.summary["reached"] = int(np.sum(np.isfinite(field.values) & graph.mask))

    def task_solve(self, p):
        datum = self.datum(p.get("boundary"), self.omega_lattice())
        margin = self.margin([self.K], datum.oscillation)
        graph, _ = extended_graph(self.group, self.omega, self.K, self.cfg.spacing, self.cfg.directions,
                                  margin=margin, K=self.K)
        bcc = check_bcc(graph, self.K, datum)
        try:
            sol = solve_dirichlet(graph, self.K, datum, self.omega, bcc, override=bool(p.get("override", False)))
        finally:
            self.emit(write_json(self.out / "bcc.json", bcc.to_dict()))
        self.emit(write_field(self.out / "w.csv", sol.u))
        self.summary.update(
            {"label": sol.label, "margin": margin, "unreached": sol.unreached, "attainment_error": sol.attainment_error}
        )

    def _verify_field(self, p, graph):
        spec = p.get("field", "solve")
        closure, boundary = graph.lattice.domain_masks(self.omega)
        if spec == "solve":
            return None
        p0 = snap(graph, spec["cone"])
        f = shortest_distances(graph, [p0], "sigma", reverse=True)
        vals = np.where(closure, f.values, np.nan)
        return ScalarField(graph.lattice, vals, boundary, {"cone": list(map(float, spec["cone"]))})

    def task_verify(self, p):
        radii = self.radii(p)
        expect = p.get("expect", "solution")
        probes = self.sample_points(p.get("probes", 20), p.get("probe_box"))
        if p.get("field", "solve") == "solve":
            datum = self.datum(p.get("boundary"), self.omega_lattice())
            sol, graph = self.solve(self.K, datum, self.margin([self.K], datum.oscillation))
            u = sol.u
        else:
            graph = extended_graph(self.group, self.omega, self.K, self.cfg.spacing, self.cfg.directions,
                                   self.cfg.margin, self.K)[0]
            u = self._verify_field(p, graph)
        rep = monge_residuals(u, self.H, graph, probes, radii, p.get("tau"))
        holds = [r.holds(expect) for r in rep.records]
        self.emit(write_json(self.out / "residuals.json", {
            "expect": expect, "tau": rep.tau, "radii": radii, "holds": all(holds), "records": rep.to_list(),
        }))
        failed = [k for k, ok in enumerate(holds) if not ok]
        if "ae" in p:
            a = p["ae"]
            ae = ae_subsolution_check(u, self.H, self.group, probes, a.get("h_fd", 2 * self.cfg.spacing),
                                      a.get("tau_fd", 0.1))
            frac = a.get("fraction", 0.95)
            d = ae.to_dict()
            d["required_fraction"] = frac
            d["passed"] = ae.passed(frac)
            self.emit(write_json(self.out / "ae.json", d))
            if not d["passed"]:
                raise TaskFailure(f"a.e. subsolution check passed at {ae.fraction_ok:.3f} < {frac} of probes")
        self.summary.update({"probes": len(holds), "holding": len(holds) - len(failed), "worst": rep.worst})
        if failed:
            r = rep.records[failed[0]]
            raise TaskFailure(
                f"{expect} property fails at {len(failed)} of {len(holds)} probes "
                f"(first at {r.x0.tolist()}: estimate {r.estimate:.6g}, tau {r.tau:.6g})"
            )

    def task_compare(self, p):
        lat = self.omega_lattice()
        if "lower" in p or "upper" in p:
            cases = [(p.get("lower", "0"), p.get("upper", "0"))]
        else:
            lip = p.get("lipschitz", 0.5 / self.H.alpha)
            cases = [random_ordered_formulas(self.rng, self.group.m, lip) for _ in range(p.get("random_pairs", 10))]
        K_hi = self.K
        if "upper_hamiltonian" in p:
            _, K_hi = self.extension_of(p["upper_hamiltonian"])
        data = [(self.datum(lo, lat), self.datum(hi, lat)) for lo, hi in cases]
        # one margin for every case, so each extension needs a single graph
        margin = self.margin([self.K, K_hi], max(max(a.oscillation, b.oscillation) for a, b in data))
        g_lo = self.graph_for(self.K, margin)
        g_hi = g_lo if K_hi is self.K else self.graph_for(K_hi, margin)
        reports = []
        for (lo_spec, hi_spec), (lo, hi) in zip(cases, data):
            u, _ = self.solve(self.K, lo, margin, graph=g_lo)
            v, _ = self.solve(K_hi, hi, margin, graph=g_hi)
            rep = comparison_harness(self.H, g_hi, u.u, v.u, p.get("tol"))
            reports.append({"lower": lo_spec, "upper": hi_spec, **rep.to_dict()})
        self.emit(write_json(self.out / "compare.json", {"cases": reports}))
        bad = [r for r in reports if r["status"] != "pass"]
        self.summary.update({"cases": len(reports), "passed": len(reports) - len(bad)})
        if bad:
            raise TaskFailure(f"comparison fails in {len(bad)} of {len(reports)} cases (first: {bad[0]['status']})")

    def task_stability(self, p):
        limit_spec = p.get("limit", self.cfg.raw["hamiltonian"])
        H_inf, K_inf = self.extension_of(limit_spec)
        if "sequence" in p:
            seq = [self.extension_of(s)[1] for s in p["sequence"]]
        else:
            fam = p.get("family", {"n": [1, 2, 4, 8, 16]})
            r = fam.get("r", 1.0)
            seq = [
                self.extension_of({"alpha": H_inf.alpha, "pieces": [{"zset": {"kind": "ball", "r": r * (1 + 1 / n)}}]})[1]
                for n in fam["n"]
            ]
        datum = self.datum(p.get("boundary"), self.omega_lattice())
        margin = self.margin([K_inf, *seq], datum.oscillation)
        pts = self.sample_points(2 * p.get("pairs", 50))
        pairs = list(zip(pts[0::2], pts[1::2]))
        probes = self.sample_points(p["probes"], p.get("probe_box")) if "probes" in p else None

        def builder(K):
            return extended_graph(self.group, self.omega, K, self.cfg.spacing, self.cfg.directions, margin, K)[0]

        def solver(graph, K):
            return solve_dirichlet(graph, K, datum, self.omega).u

        rep = stability_harness(seq, K_inf, builder, solver, pairs, probes, self.radii(p) if probes is not None else None)
        d = rep.to_dict()
        max_ratio = p.get("max_ratio")
        ok = rep.distance_monotone and rep.solution_monotone
        if max_ratio is not None:
            ok = ok and rep.distance_ratio <= max_ratio and rep.solution_ratio <= max_ratio
        if rep.residuals is not None:
            ok = ok and rep.residuals.holds("solution")
        d.update({"max_ratio": max_ratio, "passed": ok})
        self.emit(write_json(self.out / "stability.json", d))
        self.summary.update({"distance_ratio": rep.distance_ratio, "solution_ratio": rep.solution_ratio})
        if not ok:
            raise TaskFailure("deviations do not decrease as required")

    def task_probe(self, p):
        pairs, scales = [], []
        for x, y in p.get("pairs", []):
            pairs.append((x, y))
            scales.append(np.nan)
        if "scaling" in p:
            s = p["scaling"]
            o, v = np.asarray(s["origin"], float), np.asarray(s["direction"], float)
            for t in s["scales"]:
                pairs.append((o, o + t * v))
                scales.append(float(t))
        if not pairs:
            raise InputError("probe needs 'pairs' or 'scaling'")
        spacings = p.get("spacings", [self.cfg.spacing])
        table = convergence_probe(self.group, self.omega, self.H, pairs, spacings, p.get("kind", "cc"),
                                  self.cfg.directions)
        scales = np.asarray(scales)
        scaled = np.isfinite(scales)
        slopes = {}
        for h in table.spacings:
            if scaled.sum() >= 2:
                slopes[h] = loglog_slope(scales[scaled], table.column("graph", h)[scaled])
        rows = []
        for r, rec in zip(table.rows, table.records()):
            rows.append([*rec, scales[r.pair], slopes.get(r.spacing, np.nan) if scaled[r.pair] else np.nan])
        self.emit(write_csv(self.out / "probe.csv", [*table.header(), "scale", "slope"], rows))
        self.summary.update({"slopes": {format(h, ".17g"): s for h, s in slopes.items()}, "unstable": table.unstable})


def _manifest(out: Path, command: str, cfg: RunConfig | None, run: Run | None, code: int, reason: str | None,
              config_path: str | None) -> Path:
    produced = []
    if run is not None:
        for f in run.produced:
            produced.append({"file": f.name, "sha256": file_digest(f)})
    data = {
        "command": command,
        "config": config_path,
        "config_hash": None if cfg is None else cfg.digest(),
        "seed": None if cfg is None else cfg.seed,
        "spacing": None if cfg is None else cfg.spacing,
        "exit_code": code,
        "status": "success" if code == EXIT_OK else "failure",
        "failure_reason": reason,
        "produced": produced,
        "summary": {} if run is None else run.summary,
        "versions": _versions(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return write_json(out / "manifest.json", data)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    cfg = run = args = None
    out = None
    command = argv[0] if argv else None
    config_path = None
    try:
        args = parser.parse_args(argv)
        command, config_path = args.command, args.config
        out = Path(args.out) if args.out else None
        cfg = RunConfig.from_file(args.config, {"seed": args.seed, "spacing": args.spacing})
        if cfg.task is not None and cfg.task != args.command:
            raise InputError(f"config is for task '{cfg.task}', not '{args.command}'")
        cfg.raw["task"] = args.command
        out = out or cfg.output or Path("subhj-out")
        out.mkdir(parents=True, exist_ok=True)
        run = Run(cfg, out)
        run.validate()
        getattr(run, f"task_{args.command}")(cfg.params)
        code, reason = EXIT_OK, None
    except (InputError, jsonschema.ValidationError) as exc:
        code, reason = EXIT_PARSE, f"parse error: {exc}"
    except ValidationFailure as exc:
        code, reason = EXIT_INVALID, f"validation failure: {exc}"
    except (TaskFailure, CompatibilityError) as exc:
        code, reason = EXIT_TASK, f"task failure: {exc}"
    except (SubHJError, ValueError, MemoryError) as exc:
        code, reason = EXIT_TASK, f"task failure: {type(exc).__name__}: {exc}"
    if reason:
        print(f"subhj: {reason}", file=sys.stderr)
    if out is None and args is not None:
        # the config never loaded: fall back to the default directory
        out = Path("subhj-out")
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            path = _manifest(out, command, cfg, run, code, reason, config_path)
            print(f"subhj: wrote {path}", file=sys.stderr)
        except OSError as exc:
            print(f"subhj: could not write manifest: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
