"""Structured meshes of the square and hole meshes for synthetic forward solves."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import SIDES, Label, Mesh, MeshError, boundary_distance, side_of
from .shapes import ShapeSpec


def _check_sides(dirichlet_sides: Iterable[str]) -> tuple[str, ...]:
    sides = tuple(dirichlet_sides)
    unknown = set(sides) - set(SIDES)
    if unknown:
        raise ValueError(f"unknown side(s) {sorted(unknown)}; expected a subset of {SIDES}")
    return sides


def label_outer_edges(vertices: np.ndarray, edges: np.ndarray,
                      dirichlet_sides: Iterable[str]) -> np.ndarray:
    sides = _check_sides(dirichlet_sides)
    mid = vertices[edges].mean(axis=1)
    names = side_of(mid)
    if np.any(names == ""):
        raise MeshError("edge is not on the square boundary")
    return np.where(np.isin(names, sides), int(Label.SIGMA_D), int(Label.SIGMA_N))


def generate_square_mesh(n: int, dirichlet_sides: Sequence[str] = ("bottom",)) -> Mesh:
    """Structured mesh of [-1, 1]^2 with ``n`` cells per side.

    Every cell is split along its SW-NE diagonal, which is also the
    refinement edge of both halves.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n + 1)
    coords = (2 * i - n) / n
    X, Y = np.meshgrid(coords, coords)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(ix, iy):
        return ix + iy * (n + 1)

    ix, iy = np.meshgrid(np.arange(n), np.arange(n))
    ix, iy = ix.ravel(), iy.ravel()
    sw, se, ne, nw = vid(ix, iy), vid(ix + 1, iy), vid(ix + 1, iy + 1), vid(ix, iy + 1)
    # newest vertex first: the right-angle corner, so the diagonal is the refinement edge
    lower = np.stack([se, ne, sw], axis=1)
    upper = np.stack([nw, sw, ne], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    k = np.arange(n)
    bottom = np.stack([vid(k, 0), vid(k + 1, 0)], axis=1)
    right = np.stack([vid(n, k), vid(n, k + 1)], axis=1)
    top = np.stack([vid(n - k, n), vid(n - k - 1, n)], axis=1)
    left = np.stack([vid(0, n - k), vid(0, n - k - 1)], axis=1)
    edges = np.concatenate([bottom, right, top, left])
    labels = label_outer_edges(vertices, edges, dirichlet_sides)
    return Mesh(vertices, triangles, edges, labels)


def generate_hole_mesh(n: int, shapes: Sequence[ShapeSpec],
                       dirichlet_sides: Sequence[str] = ("bottom",),
                       d0: float = 0.1) -> Mesh:
    """Square mesh with every triangle whose centroid lies in a shape removed.

    The staircase boundary left behind is labelled ``CAVITY``.  Shapes must
    keep a distance of at least ``2*d0`` from the outer boundary.
    """
    base = generate_square_mesh(n, dirichlet_sides)
    if not shapes:
        return base
    for shape in shapes:
        dist = shape.distance_to_domain_boundary()
        if dist < 2.0 * d0:
            raise MeshError(f"{shape.kind} lies {dist:.4g} from the outer boundary (< 2*d0 = {2 * d0:g})")
    inside = np.zeros(base.n_triangles, dtype=bool)
    for shape in shapes:
        inside |= shape.contains(base.centroids)
    if not inside.any():
        return base
    kept = base.triangles[~inside]
    if len(kept) == 0:
        raise MeshError("all triangles removed")

    used = np.unique(kept)
    renumber = np.full(base.n_vertices, -1, dtype=np.int64)
    renumber[used] = np.arange(len(used))
    vertices = base.vertices[used]
    triangles = renumber[kept]

    outer_edges = renumber[base.boundary_edges]
    if np.any(outer_edges < 0):
        raise MeshError("cavity reaches the outer boundary")

    probe = Mesh(vertices, triangles, outer_edges, base.boundary_labels)
    topo = probe.topological_boundary()
    outer_keys = {tuple(sorted(e)) for e in outer_edges}
    cavity = np.array([e for e in topo if tuple(e) not in outer_keys], dtype=np.int64).reshape(-1, 2)
    edges = np.concatenate([outer_edges, cavity])
    labels = np.concatenate([base.boundary_labels,
                             np.full(len(cavity), int(Label.CAVITY), dtype=np.int64)])
    mesh = Mesh(vertices, triangles, edges, labels)
    _check_connected(mesh)
    return mesh


def _check_connected(mesh: Mesh) -> None:
    uniq, t2e = mesh.edges
    counts = mesh.edge_triangle_counts()
    tri = np.repeat(np.arange(mesh.n_triangles), 3)
    edge = t2e.ravel()
    interior = counts[edge] == 2
    order = np.argsort(edge[interior], kind="stable")
    pairs = tri[interior][order].reshape(-1, 2)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                       shape=(mesh.n_triangles, mesh.n_triangles))
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != 1:
        raise MeshError(f"hole removal disconnects the domain into {ncomp} pieces")


def inner_band(mesh: Mesh, d0: float) -> np.ndarray:
    """Indices of vertices within distance ``d0`` of the outer boundary."""
    if not 0.0 < d0 < 1.0:
        raise ValueError("d0 must lie in (0, 1)")
    return np.flatnonzero(boundary_distance(mesh.vertices) <= d0 + 1e-12)
