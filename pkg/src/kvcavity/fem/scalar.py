"""Scalar P1 mass and stiffness matrices for the phase field."""

from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp

from ..mesh import Mesh
from .pattern import ScatterPattern

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0
_cache: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


def _entry(mesh: Mesh) -> dict:
    entry = _cache.get(mesh)
    if entry is None:
        entry = {}
        _cache[mesh] = entry
    return entry


def scalar_pattern(mesh: Mesh) -> ScatterPattern:
    entry = _entry(mesh)
    if "pattern" not in entry:
        entry["pattern"] = ScatterPattern(mesh.triangles, mesh.n_vertices)
    return entry["pattern"]


def element_mass(mesh: Mesh) -> np.ndarray:
    return mesh.areas[:, None, None] * _LOCAL_MASS[None]


def element_laplacian(mesh: Mesh) -> np.ndarray:
    g = mesh.gradients
    return mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", g, g)


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix (cached per mesh)."""
    entry = _entry(mesh)
    if "mass" not in entry:
        entry["mass"] = scalar_pattern(mesh).assemble(element_mass(mesh))
    return entry["mass"]


def laplacian_matrix(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix of the Dirichlet form int grad u . grad v (cached per mesh)."""
    entry = _entry(mesh)
    if "lap" not in entry:
        entry["lap"] = scalar_pattern(mesh).assemble(element_laplacian(mesh))
    return entry["lap"]


def lumped_mass(mesh: Mesh) -> np.ndarray:
    return np.asarray(mass_matrix(mesh).sum(axis=1)).ravel()
