"""Finite-element assembly and linear solvers."""

from .elasticity import (
    LOADS, BoundaryLoad, ElasticityOperator, ErsatzCoefficient, IsotropicMaterial, assemble,
    edge_mass_pairing, element_factors, element_stiffness, element_stiffnesses, get_load,
    load_vector, operator_for, solve_cavity_forward, solve_dirichlet_state, solve_neumann_state,
    solve_prescribed,
)
from .linsolve import SolverError, SparseSystem, pcg, solve_spd
from .scalar import laplacian_matrix, lumped_mass, mass_matrix

__all__ = [
    "LOADS", "BoundaryLoad", "ElasticityOperator", "ErsatzCoefficient", "IsotropicMaterial",
    "assemble", "edge_mass_pairing", "element_factors", "element_stiffness",
    "element_stiffnesses", "get_load", "load_vector", "operator_for", "solve_cavity_forward",
    "solve_dirichlet_state", "solve_neumann_state", "solve_prescribed", "SolverError", "SparseSystem", "pcg",
    "solve_spd", "laplacian_matrix", "lumped_mass", "mass_matrix",
]
