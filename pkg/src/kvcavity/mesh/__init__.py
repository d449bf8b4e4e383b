"""Triangulations of the square, hole meshes, refinement and transfer."""

from .core import PERIMETER, SIDES, Label, Mesh, MeshError, arclength, boundary_distance, side_of
from .generate import generate_hole_mesh, generate_square_mesh, inner_band
from .kvmesh import KVMeshParseError, read_mesh, write_mesh
from .locate import boundary_trace, evaluate, interpolate_nodal, locate
from .refine import Prolongation, element_gradient_norms, mark_by_gradient, refine
from .shapes import ShapeSpec

__all__ = [
    "PERIMETER", "SIDES", "Label", "Mesh", "MeshError", "arclength", "boundary_distance",
    "side_of", "generate_hole_mesh", "generate_square_mesh", "inner_band",
    "KVMeshParseError", "read_mesh", "write_mesh", "boundary_trace", "evaluate",
    "interpolate_nodal", "locate", "Prolongation", "element_gradient_norms",
    "mark_by_gradient", "refine", "ShapeSpec",
]
