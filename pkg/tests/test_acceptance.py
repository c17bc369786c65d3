"""Acceptance criteria 1-9, each reported as one PASS/FAIL line.

The Heisenberg scenarios at spacing 1/64 dominate the runtime (a few
minutes in total on one core).
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import box_boundary_distance, cross_polytope, pairwise_hopf_lax, polytope_support_vertices
from subhj.carnot import GroupSpec
from subhj.cli import EXIT_OK, main
from subhj.expr import parse_predicate
from subhj.grid import DomainSpec, Lattice
from subhj.hamiltonian import Ball, Hamiltonian, Piece, Polytope, sigma_star
from subhj.hopflax import BoundaryDatum, check_bcc, extended_graph, restrict_to_monge_data, solve_dirichlet
from subhj.io import read_csv
from subhj.metric import build_graph, shortest_distances
from subhj.verify import ae_subsolution_check, monge_residuals

A2 = GroupSpec.abelian(2)
H1 = GroupSpec.heisenberg()
UNIT = DomainSpec(((0, 1), (0, 1)))
HBOX = DomainSpec(((-0.25, 0.25), (-0.25, 0.25), (-1 / 16, 1 / 16)))
CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SPACINGS = (1 / 32, 1 / 64)


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def heis_probes(rng, n):
    return np.column_stack([rng.uniform(-0.1, 0.1, (n, 2)), rng.uniform(-0.02, 0.02, n)])


def scenario(name):
    """(group, omega, H, boundary formula, margin, probes, radii) of a Monge scenario."""
    if name == "abelian":
        h = Hamiltonian.uniform(Ball(1.0), 1.25, region=UNIT)
        probes = np.random.default_rng(0).uniform(0.3, 0.7, (20, 2))
        return A2, UNIT, h, "0.3*x1", None, probes, [0.2, 0.1]
    if name == "heisenberg":
        h = Hamiltonian.uniform(Ball(1.0), 1.25, region=HBOX)
    else:
        pieces = (Piece(Ball(1.0), parse_predicate("x1 < 0")), Piece(Ball(2.0)))
        h = Hamiltonian(2.0, pieces, 2, region=HBOX)
    return H1, HBOX, h, "0.3*x1", "certified", heis_probes(np.random.default_rng(1), 20), [0.1, 0.05]


def solve_scenario(name, spacing):
    g, omega, h, formula, margin, probes, radii = scenario(name)
    lat = Lattice.from_box(g, omega, spacing)
    osc = BoundaryDatum.from_formula(lat, omega, formula).oscillation
    graph, K = extended_graph(g, omega, h, spacing, 16, margin, oscillation=osc)
    datum = BoundaryDatum.from_formula(graph.lattice, omega, formula)
    sol = solve_dirichlet(graph, K, datum, omega, check_bcc(graph, K, datum))
    return h, graph, restrict_to_monge_data(sol), probes, radii


# -- criterion 1 ----------------------------------------------------------------------------


def test_c1_abelian_eikonal_exactness(capsys):
    t0 = time.perf_counter()
    h = Hamiltonian.uniform(Ball(1.0), 1.25, region=UNIT)
    graph, K = extended_graph(A2, UNIT, h, 1 / 64, 16)
    datum = BoundaryDatum.from_formula(graph.lattice, UNIT, "0")
    sol = solve_dirichlet(graph, K, datum, UNIT)
    probes = np.random.default_rng(0).uniform(0.05, 0.95, (25, 2))
    err = float(np.max(np.abs(sol.u(probes) - box_boundary_distance(probes, 0.0, 1.0))))
    elapsed = time.perf_counter() - t0
    ok = err <= 3 / 64 and elapsed < 30
    report(capsys, 1, ok, f"max |w - dist| = {err:.4g} (limit {3 / 64:.4g}), runtime {elapsed:.1f} s (limit 30 s)")


# -- criterion 2 ----------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["ball2", "piecewise"])
def test_c2_metric_sandwich(capsys, kind):
    omega = DomainSpec(((-1, 1), (-1, 1), (-1, 1)))
    if kind == "ball2":
        h = Hamiltonian.uniform(Ball(2.0), 2.0, region=omega)
    else:
        h = Hamiltonian(2.0, (Piece(Ball(0.5), parse_predicate("x1 < 0")), Piece(Ball(2.0))), 2, region=omega)
    graph = build_graph(H1, omega, 1 / 8, 16, h)
    rng = np.random.default_rng(2)
    live = np.flatnonzero(graph.mask)
    lo = hi = None
    count = 0
    for src in rng.choice(live, 20, replace=False):
        dst = rng.choice(live, 10, replace=False)
        cc = shortest_distances(graph, [src], "cc").values[dst]
        sg = shortest_distances(graph, [src], "sigma").values[dst]
        assert np.all(np.isfinite(cc)) and np.all(cc[dst != src] > 0)
        keep = dst != src
        r = sg[keep] / cc[keep]
        lo = r.min() if lo is None else min(lo, r.min())
        hi = r.max() if hi is None else max(hi, r.max())
        count += int(keep.sum())
        if not (np.all(0.5 * cc <= sg) and np.all(sg <= 2.0 * cc)):
            report(capsys, 2, False, f"{kind}: sandwich broken on a pair from node {src}")
    report(capsys, 2, count >= 195, f"{kind}: {count} pairs, d_sigma/d_CC in [{lo:.6g}, {hi:.6g}] within [0.5, 2]")


# -- criterion 3 ----------------------------------------------------------------------------


def test_c3_anisotropic_scaling(capsys, tmp_path):
    out = tmp_path / "probe"
    code = main(["probe", "--config", str(CONFIGS / "heis_scaling.json"), "--out", str(out), "--spacing", "0.015625"])
    assert code == EXIT_OK
    header, data = read_csv(out / "probe.csv")
    slope = float(data[0, header.index("slope")])
    report(capsys, 3, abs(slope - 0.5) <= 0.1, f"log-log slope {slope:.4f} at spacing 1/64 (target 0.5 +- 0.1)")


# -- criteria 4 and 8 --------------------------------------------------------------------------


@pytest.fixture(scope="module")
def heisenberg_ball():
    """Monge estimates at both spacings plus the criterion 8 agreement at 1/64."""
    worst = []
    for spacing in SPACINGS:
        h, graph, u, probes, radii = solve_scenario("heisenberg", spacing)
        rep = monge_residuals(u, h, graph, probes, radii)
        worst.append((rep.worst, rep.holds("solution"), rep.tau))
    # criterion 8 reuses the finest solution before the graph is dropped
    probes = heis_probes(np.random.default_rng(8), 100)
    mg = monge_residuals(u, h, graph, probes, radii)
    ae = ae_subsolution_check(u, h, H1, probes, 2 * graph.spacing)
    agree = [bool(a) == r.holds("subsolution") for a, r in zip(ae.ok, mg.records)]
    return worst, {"agree": float(np.mean(agree)), "skipped": ae.skipped, "fraction_ok": ae.fraction_ok}


def _monge_criterion(capsys, name, worst):
    (w32, ok32, t32), (w64, ok64, t64) = worst
    factor = w32 / w64 if w64 > 0 else np.inf
    ok = ok32 and ok64 and factor >= 1.5
    report(
        capsys, 4, ok,
        f"{name}: all 20 solution_ok at 1/32 ({ok32}, tau {t32:.3g}) and 1/64 ({ok64}, tau {t64:.3g}); "
        f"worst |estimate| {w32:.4g} -> {w64:.4g}, factor {factor:.3g} (need >= 1.5)",
    )


@pytest.mark.parametrize("name", ["abelian", "piecewise"])
def test_c4_monge_solution(capsys, name):
    worst = []
    for spacing in SPACINGS:
        h, graph, u, probes, radii = solve_scenario(name, spacing)
        rep = monge_residuals(u, h, graph, probes, radii)
        worst.append((rep.worst, rep.holds("solution"), rep.tau))
        del graph, u
    _monge_criterion(capsys, name, worst)


def test_c4_monge_solution_heisenberg(capsys, heisenberg_ball):
    _monge_criterion(capsys, "heisenberg", heisenberg_ball[0])


def test_c8_monge_viscosity_consistency(capsys, heisenberg_ball):
    r = heisenberg_ball[1]
    ok = r["agree"] >= 0.95 and r["skipped"] == 0
    report(
        capsys, 8, ok,
        f"agreement {r['agree']:.2f} on 100 probes (need >= 0.95), ae fraction_ok {r['fraction_ok']:.2f}, "
        f"skipped {r['skipped']}",
    )


# -- criterion 5 ----------------------------------------------------------------------------

_C5 = {
    "abelian": {"group": {"kind": "abelian", "n": 2}, "domain": {"box": [[0, 1], [0, 1]]},
                "hamiltonian": {"alpha": 1.25, "pieces": [{"zset": {"kind": "ball", "r": 1}}]}},
    "heisenberg": {"group": {"kind": "heisenberg"}, "domain": {"box": [[-0.25, 0.25], [-0.25, 0.25], [-0.0625, 0.0625]]},
                   "hamiltonian": {"alpha": 1.25, "pieces": [{"zset": {"kind": "ball", "r": 1}}]}},
    "piecewise": {"group": {"kind": "heisenberg"}, "domain": {"box": [[-0.25, 0.25], [-0.25, 0.25], [-0.0625, 0.0625]]},
                  "hamiltonian": {"alpha": 2.0, "pieces": [{"where": "x1 < 0", "zset": {"kind": "ball", "r": 1}},
                                                           {"zset": {"kind": "ball", "r": 2}}]}},
}


@pytest.mark.parametrize("name", sorted(_C5))
def test_c5_comparison_principle(capsys, tmp_path, name):
    cfg = dict(_C5[name])
    margin = None if name == "abelian" else "certified"
    cfg.update({"task": "compare", "seed": 5, "params": {"random_pairs": 10},
                "grid": {"spacing": 1 / 32, "stencil_directions": 16, "margin": margin}})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code = main(["compare", "--config", str(path), "--out", str(tmp_path / "o")])
    cases = json.loads((tmp_path / "o" / "compare.json").read_text())["cases"]
    passed = sum(c["status"] == "pass" for c in cases)
    worst = max(c["max_excess"] for c in cases if c["max_excess"] is not None)
    ok = code == EXIT_OK and passed == len(cases) == 10
    report(capsys, 5, ok, f"{name}: {passed}/{len(cases)} ordered pairs pass, worst max(u - v) {worst:.4g}, "
                          f"tol {cases[0]['tol']:.4g}")


# -- criterion 6 ----------------------------------------------------------------------------


def test_c6_stability(capsys, tmp_path):
    cfg = {"task": "stability", "seed": 6, "group": {"kind": "abelian", "n": 2}, "domain": {"box": [[0, 1], [0, 1]]},
           "hamiltonian": {"alpha": 2.0, "pieces": [{"zset": {"kind": "ball", "r": 1}}]},
           "grid": {"spacing": 1 / 32, "stencil_directions": 16},
           "params": {"family": {"n": [1, 2, 4, 8, 16]}, "boundary": "0.2*x1", "pairs": 50, "max_ratio": 0.125}}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(cfg))
    code = main(["stability", "--config", str(path), "--out", str(tmp_path / "o")])
    rep = json.loads((tmp_path / "o" / "stability.json").read_text())
    ok = (code == EXIT_OK and rep["distance_monotone"] and rep["solution_monotone"]
          and rep["distance_ratio"] <= 0.125 and rep["solution_ratio"] <= 0.125)
    report(capsys, 6, ok, f"monotone distance {rep['distance_monotone']} / solution {rep['solution_monotone']}; "
                          f"n=16 over n=1 ratios {rep['distance_ratio']:.4g} / {rep['solution_ratio']:.4g} (need <= 1/8)")


# -- criterion 7 ----------------------------------------------------------------------------


def _extension_gap(g, omega, h, spacing, margin, pairs, osc=0.0):
    inner = build_graph(g, omega, spacing, 16, h)
    outer, _ = extended_graph(g, omega, h, spacing, 16, margin, oscillation=osc)
    gap = 0.0
    for x, y in pairs:
        a = shortest_distances(inner, [inner.nearest([x])[0]], "sigma", targets=inner.nearest([y]))
        b = shortest_distances(outer, [outer.nearest([x])[0]], "sigma", targets=outer.nearest([y]))
        da, db = a.values[inner.nearest([y])[0]], b.values[outer.nearest([y])[0]]
        assert np.isfinite(da) and np.isfinite(db)
        gap = max(gap, abs(da - db))
    return gap, outer.cell_cost


@pytest.mark.parametrize("name", ["abelian", "piecewise"])
def test_c7_extension_invariance(capsys, name):
    rng = np.random.default_rng(7)
    if name == "abelian":
        h = Hamiltonian.uniform(Polytope(np.array([[2.0, 0], [0, 1], [-1, 0], [0, -1]])), 2.0, region=UNIT)
        pts = rng.uniform(0.3, 0.7, (100, 2))
        gap, cell = _extension_gap(A2, UNIT, h, 1 / 64, None, zip(pts[0::2], pts[1::2]))
    else:
        _, _, h, *_ = scenario("piecewise")
        pts = heis_probes(rng, 100)
        gap, cell = _extension_gap(H1, HBOX, h, 1 / 32, "certified", zip(pts[0::2], pts[1::2]), 0.15)
    report(capsys, 7, gap <= 2 * cell, f"{name}: 50 deep pairs, max |d_omega - d_ext| = {gap:.4g} (limit {2 * cell:.4g})")


# -- criterion 9 ----------------------------------------------------------------------------


@pytest.mark.parametrize("formula", ["0", "0.4*x1 - 0.2*x2", "0.3*abs(x2 - 0.5) + 0.1*x1"])
def test_c9_brute_force_hopf_lax(capsys, formula):
    h = Hamiltonian.uniform(Polytope(np.array([[2.0, 0], [0, 1], [-1, 0], [0, -1]])), 2.0, region=UNIT)
    graph, K = extended_graph(A2, UNIT, h, 1 / 8, 16, 0.5)
    datum = BoundaryDatum.from_formula(graph.lattice, UNIT, formula)
    sol = solve_dirichlet(graph, K, datum, UNIT)
    want = pairwise_hopf_lax(graph, datum.nodes(graph), datum.values)
    live = np.isfinite(sol.values)
    exact = bool(np.array_equal(sol.values[live], want[live]))
    report(capsys, 9, exact and graph.size <= 500,
           f"Hopf-Lax '{formula}': {graph.size} nodes, {len(datum)} samples, multi-source == pairwise min: {exact}")


@pytest.mark.parametrize("m", [2, 3])
def test_c9_cross_polytope_support(capsys, m):
    verts = cross_polytope(m)
    h = Hamiltonian.uniform(Polytope(verts), 2.0)
    rng = np.random.default_rng(9)
    v = rng.normal(size=(1000, m))
    x = np.zeros((1000, m))
    got = sigma_star(h, x, v)
    want = np.array([polytope_support_vertices(verts, vi) for vi in v])
    err = float(np.max(np.abs(got - want)))
    report(capsys, 9, err <= 1e-9, f"cross-polytope m={m}: max |sigma* - vertex enumeration| = {err:.3g} on 1000 vectors")
