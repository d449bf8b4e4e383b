"""Triangular mesh container and structural queries.

Vertex coordinates live in the square ``[-1, 1]^2``.  Each triangle is stored
counterclockwise as ``(a, b, c)`` where ``a`` is the *newest vertex*: the edge
``(b, c)`` opposite to it is the refinement edge used by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np


class Label(IntEnum):
    """Boundary edge labels."""

    SIGMA_N = 0
    SIGMA_D = 1
    CAVITY = 2


SIDES = ("bottom", "right", "top", "left")
PERIMETER = 8.0


class MeshError(ValueError):
    """Raised for structurally invalid meshes."""


@dataclass(eq=False)
class Mesh:
    """Conforming P1 triangulation with labeled boundary edges.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise, newest vertex first
    boundary_edges : (nb, 2) int array
    boundary_labels : (nb,) int array of :class:`Label` values
    generation : (nt,) int array, refinement level of each triangle
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: np.ndarray
    generation: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.boundary_edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_labels = np.ascontiguousarray(self.boundary_labels, dtype=np.int64).reshape(-1)
        if self.generation is None:
            self.generation = np.zeros(len(self.triangles), dtype=np.int64)
        else:
            self.generation = np.ascontiguousarray(self.generation, dtype=np.int64).reshape(-1)
        for arr in (self.vertices, self.triangles, self.boundary_edges,
                    self.boundary_labels, self.generation):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def gradients(self) -> np.ndarray:
        """P1 basis gradients, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        x, y = p[..., 0], p[..., 1]
        det = 2.0 * self.signed_areas
        b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([b, c], axis=2) / det[:, None, None]

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges and the (nt, 3) map triangle-edge -> edge id.

        Local edge ``k`` of a triangle is the one opposite local vertex ``k``.
        """
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        local = np.sort(local, axis=1)
        uniq, inverse = np.unique(local, axis=0, return_inverse=True)
        return uniq, inverse.reshape(-1, 3)

    def edge_triangle_counts(self) -> np.ndarray:
        _, t2e = self.edges
        return np.bincount(t2e.ravel(), minlength=len(self.edges[0]))

    def topological_boundary(self) -> np.ndarray:
        """Edges (sorted vertex pairs) incident to exactly one triangle."""
        uniq, _ = self.edges
        return uniq[self.edge_triangle_counts() == 1]

    def vertices_with_label(self, *labels: Label) -> np.ndarray:
        mask = np.isin(self.boundary_labels, [int(lab) for lab in labels])
        return np.unique(self.boundary_edges[mask])

    @cached_property
    def dirichlet_vertices(self) -> np.ndarray:
        return self.vertices_with_label(Label.SIGMA_D)

    @cached_property
    def neumann_vertices(self) -> np.ndarray:
        """Vertices on Sigma_N edges that are not clamped by Sigma_D."""
        return np.setdiff1d(self.vertices_with_label(Label.SIGMA_N), self.dirichlet_vertices)

    @cached_property
    def outer_vertices(self) -> np.ndarray:
        return self.vertices_with_label(Label.SIGMA_N, Label.SIGMA_D)

    def dirichlet_sides(self) -> tuple[str, ...]:
        mask = self.boundary_labels == Label.SIGMA_D
        mid = self.vertices[self.boundary_edges[mask]].mean(axis=1)
        return tuple(s for s in SIDES if np.any(side_of(mid) == s))

    def validate(self) -> None:
        """Check orientation, conformity and boundary labelling."""
        if np.any(self.triangles < 0) or np.any(self.triangles >= self.n_vertices):
            raise MeshError("triangle references an unknown vertex")
        bad = np.flatnonzero(self.signed_areas <= 0.0)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} has non-positive signed area (clockwise or degenerate)")
        counts = self.edge_triangle_counts()
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: edge shared by more than two triangles")
        topo = {tuple(e) for e in self.topological_boundary()}
        labelled = [tuple(sorted(e)) for e in self.boundary_edges]
        if len(set(labelled)) != len(labelled):
            raise MeshError("boundary edge labelled more than once")
        missing = topo - set(labelled)
        if missing:
            raise MeshError(f"unlabelled boundary edge {sorted(missing)[0]}")
        extra = set(labelled) - topo
        if extra:
            raise MeshError(f"labelled edge {sorted(extra)[0]} is not on the boundary")
        if np.any((self.boundary_labels < 0) | (self.boundary_labels > 2)):
            raise MeshError("unknown boundary label")

    def same_structure(self, other: "Mesh") -> bool:
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.boundary_edges, other.boundary_edges)
                and np.array_equal(self.boundary_labels, other.boundary_labels))


def side_of(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Name of the square side each point lies on ('' for interior points).

    Corners resolve to the side that starts there when walking
    counterclockwise from (-1, -1).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = points[:, 0], points[:, 1]
    out = np.full(len(points), "", dtype=object)
    out[(np.abs(y + 1.0) <= tol) & (x < 1.0 - tol)] = "bottom"
    out[(np.abs(x - 1.0) <= tol) & (y < 1.0 - tol)] = "right"
    out[(np.abs(y - 1.0) <= tol) & (x > -1.0 + tol)] = "top"
    out[(np.abs(x + 1.0) <= tol) & (y > -1.0 + tol)] = "left"
    return out


def arclength(points: np.ndarray) -> np.ndarray:
    """Counterclockwise arc-length parameter on the square boundary.

    Starts at (-1, -1); bottom, right, top, left cover [0,2), [2,4), [4,6),
    [6,8).
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = points[:, 0], points[:, 1]
    side = side_of(points)
    s = np.full(len(points), np.nan)
    s[side == "bottom"] = x[side == "bottom"] + 1.0
    s[side == "right"] = 2.0 + (y[side == "right"] + 1.0)
    s[side == "top"] = 4.0 + (1.0 - x[side == "top"])
    s[side == "left"] = 6.0 + (1.0 - y[side == "left"])
    return s


def boundary_distance(points: np.ndarray) -> np.ndarray:
    """Euclidean distance to the boundary of the square."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    return 1.0 - np.max(np.abs(points), axis=1)
