"""Sub-Finsler optical lengths and Hopf-Lax solutions on Carnot groups."""

__version__ = "0.1.0"

from .carnot import GroupSpec, dilate, group_inv, group_mul, horizontal_gradient_fd, koranyi_dist, koranyi_norm
from .errors import CompatibilityError, DomainError, InputError, SubHJError
from .grid import DomainSpec, Lattice, ScalarField
from .hamiltonian import (
    Ball,
    Ellipsoid,
    Hamiltonian,
    Piece,
    Polytope,
    Scaled,
    eval_H,
    extend,
    sigma_star,
    validate_H,
)
from .hopflax import BoundaryDatum, SolutionField, check_bcc, extended_graph, solve_dirichlet
from .metric import build_graph, extract_path, shortest_distances
from .verify import (
    ae_subsolution_check,
    comparison_harness,
    lipschitz_vs_optical,
    monge_residual,
    monge_residuals,
    stability_harness,
)

__all__ = [
    "Ball",
    "BoundaryDatum",
    "CompatibilityError",
    "DomainError",
    "DomainSpec",
    "Ellipsoid",
    "GroupSpec",
    "Hamiltonian",
    "InputError",
    "Lattice",
    "Piece",
    "Polytope",
    "ScalarField",
    "Scaled",
    "SolutionField",
    "SubHJError",
    "ae_subsolution_check",
    "build_graph",
    "check_bcc",
    "comparison_harness",
    "dilate",
    "eval_H",
    "extend",
    "extended_graph",
    "extract_path",
    "group_inv",
    "group_mul",
    "horizontal_gradient_fd",
    "koranyi_dist",
    "koranyi_norm",
    "lipschitz_vs_optical",
    "monge_residual",
    "monge_residuals",
    "shortest_distances",
    "sigma_star",
    "solve_dirichlet",
    "stability_harness",
    "validate_H",
]
