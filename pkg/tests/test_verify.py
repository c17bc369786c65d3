import numpy as np
import pytest

from subhj.carnot import GroupSpec
from subhj.errors import DomainError, InputError
from subhj.expr import parse_predicate
from subhj.grid import DomainSpec, ScalarField
from subhj.hamiltonian import Ball, Hamiltonian, Piece, Polytope, extend
from subhj.hopflax import BoundaryDatum, extended_graph, random_ordered_formulas, solve_dirichlet
from subhj.metric import shortest_distances
from subhj.verify import (
    ae_subsolution_check,
    classify,
    comparison_harness,
    default_radii,
    lipschitz_vs_optical,
    monge_residual,
    monge_residuals,
    stability_harness,
)

A2 = GroupSpec.abelian(2)
UNIT = DomainSpec(((0, 1), (0, 1)))
ASYM = np.array([[2.0, 0], [0, 1], [-1, 0], [0, -1]])
RADII = [0.4, 0.2]


def solve(h, formula, spacing, margin=0.5, K=None):
    graph, K = extended_graph(A2, UNIT, h, spacing, 16, margin, K=K)
    g = BoundaryDatum.from_formula(graph.lattice, UNIT, formula)
    return solve_dirichlet(graph, K, g, UNIT), graph


def reverse_cone(graph, p0):
    """u(x) = d(x, p0) on every node of the graph, as an interior field."""
    n0 = graph.nearest(np.atleast_2d(p0))[0]
    d = shortest_distances(graph, [n0], "sigma", reverse=True).values
    return ScalarField(graph.lattice, d)


@pytest.fixture(scope="module")
def ball64():
    h = Hamiltonian.uniform(Ball(1.0), 1.25, region=UNIT)
    graph, K = extended_graph(A2, UNIT, h, 1 / 64, 16, 0.5)
    return h, graph


@pytest.fixture(scope="module")
def w32():
    h = Hamiltonian.uniform(Ball(1.0), 2.0, region=UNIT)
    sol, graph = solve(h, "0.2*x1", 1 / 32)
    return h, sol, graph


def interior_probes(rng, n, lo=0.3, hi=0.7):
    return rng.uniform(lo, hi, size=(n, 2))


# -- Monge residual ----------------------------------------------------------------------


def test_classify_thresholds():
    assert classify(0.05, 0.1) == ("solution_ok", None)
    assert classify(0.5, 0.1)[0] == "subsolution_ok"
    assert classify(0.5, 0.1)[1] == ("supersolution", pytest.approx(0.4))
    assert classify(-0.5, 0.1)[0] == "supersolution_ok"
    assert default_radii(0.4) == [0.4, 0.2]
    assert default_radii(1.0, 4) == [1.0, 0.5, 0.25, 0.125]


def test_cone_away_from_vertex_is_solution(ball64):
    h, graph = ball64
    u = reverse_cone(graph, [0.0, 0.5])
    rec = monge_residual(u, h, graph, [0.75, 0.5], RADII)
    assert rec.classification == "solution_ok"
    # along the ray towards p0 the quotient vanishes on the graph
    assert all(abs(v) <= 1e-12 for v in rec.infima)


def test_cone_vertex_gives_two(ball64):
    h, graph = ball64
    hb = Hamiltonian.uniform(Ball(1.0), 1.25, region=UNIT)
    u = reverse_cone(graph, [0.5, 0.5])
    rec = monge_residual(u, hb, graph, [0.5, 0.5], RADII)
    assert rec.tau < 2
    assert all(abs(v - 2.0) <= 1e-12 for v in rec.infima)
    assert rec.classification == "subsolution_ok"
    assert rec.violation[0] == "supersolution"
    assert rec.holds("subsolution") and not rec.holds("supersolution")


def test_constant_is_strict_subsolution(ball64):
    h, graph = ball64
    u = ScalarField(graph.lattice, np.full(graph.size, 3.0))
    rec = monge_residual(u, h, graph, [0.5, 0.5], RADII, tau=0.5)
    assert all(1 / h.alpha <= v <= h.alpha for v in rec.infima)
    assert rec.holds("subsolution") and not rec.holds("supersolution")


def test_residual_domain_errors(w32):
    h, sol, graph = w32
    with pytest.raises(DomainError):
        monge_residual(sol.u, h, graph, [0.1, 0.5], RADII)
    with pytest.raises(InputError):
        monge_residual(sol.u, h, graph, [0.5, 0.5], [])


def test_hopf_lax_solution_ok_at_random_probes(w32):
    h, sol, graph = w32
    probes = interior_probes(np.random.default_rng(0), 20)
    rep = monge_residuals(sol.u, h, graph, probes, [0.2, 0.1])
    assert rep.holds("solution"), [r.estimate for r in rep.records]
    assert rep.holds("subsolution")
    assert len(rep.to_list()) == 20


def test_residual_independent_of_extension():
    h = Hamiltonian.uniform(Polytope(ASYM), 2.0, region=UNIT)
    K1 = extend(h, UNIT)
    K2 = extend(h, UNIT, [Piece(Ball(1.5))])
    sol, g1 = solve(h, "0.2*x1 - 0.1*x2", 1 / 32, K=K1)
    g2, _ = extended_graph(A2, UNIT, h, 1 / 32, 16, 0.5, K=K2)
    assert g1.lattice == g2.lattice
    probes = interior_probes(np.random.default_rng(1), 8)
    a = monge_residuals(sol.u, h, g1, probes, [0.2, 0.1])
    b = monge_residuals(sol.u, h, g2, probes, [0.2, 0.1])
    for ra, rb in zip(a.records, b.records):
        assert np.allclose(ra.infima, rb.infima, rtol=0, atol=1e-12)


# -- a.e. subsolution ----------------------------------------------------------------------


def test_ae_solution_mostly_passes(w32):
    h, sol, graph = w32
    hb = Hamiltonian.uniform(Ball(1.0), 2.0)
    probes = interior_probes(np.random.default_rng(2), 100, 0.1, 0.9)
    rep = ae_subsolution_check(sol.u, hb, A2, probes, 2 * graph.spacing)
    assert rep.skipped == 0
    assert rep.fraction_ok >= 0.95


def test_ae_steep_and_zero():
    hb = Hamiltonian.uniform(Ball(1.0), 2.0)
    probes = interior_probes(np.random.default_rng(3), 10)
    steep = ae_subsolution_check(lambda p: 2 * p[..., 0], hb, A2, probes, 0.01)
    assert np.allclose(steep.values, 1.0) and steep.fraction_ok == 0 and not steep.passed()
    zero = ae_subsolution_check(lambda p: np.zeros(p.shape[0]), hb, A2, probes, 0.01)
    assert np.allclose(zero.values, -1.0) and zero.passed()
    assert zero.to_dict()["worst"]["value"] == pytest.approx(-1.0)


def test_ae_skips_probes_near_support_edge(w32):
    h, sol, graph = w32
    hb = Hamiltonian.uniform(Ball(1.0), 2.0)
    rep = ae_subsolution_check(sol.u, hb, A2, [[0.5, 0.5], [0.99, 0.5]], 0.05)
    assert rep.skipped == 1 and rep.evaluated.tolist() == [True, False]


def test_ae_and_monge_subsolution_agree(w32):
    h, sol, graph = w32
    hb = Hamiltonian.uniform(Ball(1.0), 2.0)
    probes = interior_probes(np.random.default_rng(4), 20)
    ae = ae_subsolution_check(sol.u, hb, A2, probes, 2 * graph.spacing)
    mg = monge_residuals(sol.u, h, graph, probes, [0.2, 0.1])
    agree = np.mean([a == r.holds("subsolution") for a, r in zip(ae.ok, mg.records)])
    assert agree >= 0.95


# -- Lipschitz bound by the optical length ---------------------------------------------------


def _pairs(rng, n):
    return [(a, b) for a, b in zip(interior_probes(rng, n), interior_probes(rng, n))]


def test_lipschitz_solution_passes(w32):
    h, sol, graph = w32
    rep = lipschitz_vs_optical(sol.u, graph, h, _pairs(np.random.default_rng(5), 30))
    assert rep.passed and rep.pairs == 30


def test_lipschitz_doubled_cone_fails(ball64):
    h, graph = ball64
    u = reverse_cone(graph, [0.0, 0.5])
    u2 = ScalarField(graph.lattice, 2 * u.values)
    pairs = [([0.75, 0.5], [0.25, 0.5]), ([0.9, 0.5], [0.5, 0.5])]
    assert lipschitz_vs_optical(u, graph, h, pairs).passed
    rep = lipschitz_vs_optical(u2, graph, h, pairs)
    assert not rep.passed
    # u2(x) - u2(y) - d(x, y) = |x - y| on pairs aligned with p0
    assert rep.margin == pytest.approx(-0.5, abs=1e-12)


def test_lipschitz_constant_margin_is_min_distance(ball64):
    h, graph = ball64
    u = ScalarField(graph.lattice, np.ones(graph.size))
    pairs = [([0.25, 0.25], [0.75, 0.25]), ([0.5, 0.5], [0.5, 0.625])]
    rep = lipschitz_vs_optical(u, graph, h, pairs)
    assert rep.passed and rep.margin == pytest.approx(0.125, abs=1e-12)


# -- comparison ------------------------------------------------------------------------------------


def test_comparison_offset_gives_minus_half(w32):
    h, sol, graph = w32
    v = solve_dirichlet(graph, graph.hamiltonian, sol.boundary.shifted(0.5), UNIT)
    rep = comparison_harness(h, graph, sol.u, v.u)
    assert rep.passed and rep.max_excess == pytest.approx(-0.5, abs=1e-12)
    same = comparison_harness(h, graph, sol.u, sol.u)
    assert same.passed and same.max_excess == 0.0
    unmet = comparison_harness(h, graph, v.u, sol.u)
    assert unmet.status == "precondition unmet" and unmet.max_excess is None


def test_comparison_larger_zset_dominates():
    h1 = Hamiltonian.uniform(Ball(1.0), 2.0, region=UNIT)
    h2 = Hamiltonian.uniform(Ball(2.0), 2.0, region=UNIT)
    u, graph = solve(h1, "0.1*x2", 1 / 32)
    v, _ = solve(h2, "0.1*x2", 1 / 32)
    rep = comparison_harness(h1, graph, u.u, v.u)
    assert rep.passed
    both = u.u.support & v.u.support
    assert np.all(u.values[both] <= v.values[both] + 1e-12)


def test_comparison_ordered_random_data():
    h = Hamiltonian.uniform(Polytope(ASYM), 2.0, region=UNIT)
    graph, K = extended_graph(A2, UNIT, h, 1 / 16, 16, 0.5)
    rng = np.random.default_rng(6)
    for _ in range(5):
        lo_f, hi_f = random_ordered_formulas(rng, 2, 0.25)
        u, v = (
            solve_dirichlet(graph, K, BoundaryDatum.from_formula(graph.lattice, UNIT, f), UNIT).u
            for f in (lo_f, hi_f)
        )
        assert comparison_harness(h, graph, u, v).passed


# -- stability -----------------------------------------------------------------------------------------


def _stability_setup(spacing, formula="0.2*x1"):
    def builder(H):
        return extended_graph(A2, UNIT, H, spacing, 16, 0.5)[0]

    def solver(graph, H):
        g = BoundaryDatum.from_formula(graph.lattice, UNIT, formula)
        return solve_dirichlet(graph, graph.hamiltonian, g, UNIT).u

    return builder, solver


def test_stability_constant_sequence_is_zero():
    h = Hamiltonian.uniform(Ball(1.0), 2.0, region=UNIT)
    builder, solver = _stability_setup(1 / 16)
    rep = stability_harness([h, h], h, builder, solver, _pairs(np.random.default_rng(7), 10))
    assert rep.distance_dev == [0.0, 0.0] and rep.solution_dev == [0.0, 0.0]


def test_stability_ball_family_scales_exactly():
    ns = [1, 2, 4, 8]
    seq = [Hamiltonian.uniform(Ball(1 + 1 / n), 2.0, region=UNIT) for n in ns]
    lim = Hamiltonian.uniform(Ball(1.0), 2.0, region=UNIT)
    builder, solver = _stability_setup(1 / 16)
    pairs = _pairs(np.random.default_rng(8), 20)
    rep = stability_harness(seq, lim, builder, solver, pairs, probes=[[0.5, 0.5]], radii=[0.2, 0.1])
    # sigma_n = (1 + 1/n) |.| so every graph distance scales by the same factor
    dev = np.array(rep.distance_dev)
    assert np.allclose(dev * np.array(ns), dev[0], rtol=1e-12)
    assert rep.distance_monotone and rep.solution_monotone
    assert rep.distance_ratio == pytest.approx(1 / 8, rel=1e-12)
    assert rep.residuals.records[0].classification == "solution_ok"


def test_stability_shrinking_slab():
    lim = Hamiltonian(2.0, (Piece(Ball(1.0), parse_predicate("x1 < 0.5")), Piece(Ball(2.0))), 2, region=UNIT)
    seq = [
        Hamiltonian(2.0, (Piece(Ball(1.0), parse_predicate(f"x1 < {0.5 + 1 / n}")), Piece(Ball(2.0))), 2, region=UNIT)
        for n in (4, 8, 16)
    ]
    builder, solver = _stability_setup(1 / 32)
    rep = stability_harness(seq, lim, builder, solver, _pairs(np.random.default_rng(9), 20))
    assert rep.distance_monotone and rep.solution_monotone
    # collapsing the slab onto the interface moves points by at most 1/n and
    # never raises path costs, so |d_n - d_inf| <= 2 alpha / n up to the grid
    cell = 2.0 / 32
    for n, d in zip((4, 8, 16), rep.distance_dev):
        assert d <= 2 * 2.0 / n + 2 * cell


def test_stability_alpha_mismatch():
    h = Hamiltonian.uniform(Ball(1.0), 2.0, region=UNIT)
    h3 = Hamiltonian.uniform(Ball(1.0), 3.0, region=UNIT)
    builder, solver = _stability_setup(1 / 8)
    with pytest.raises(InputError):
        stability_harness([h3], h, builder, solver, [([0.5, 0.5], [0.6, 0.6])])
