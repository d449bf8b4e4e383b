"""Newest-vertex bisection with conforming closure."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Mesh


@dataclass(frozen=True)
class Prolongation:
    """Transfer of P1 fields from a mesh to its refinement.

    Old vertices keep their indices; vertex ``n_old + k`` is the midpoint of
    ``parents[k]``.  Parents always precede children, so a single forward
    sweep evaluates nested midpoints exactly.
    """

    n_old: int
    parents: np.ndarray

    @property
    def n_new(self) -> int:
        return self.n_old + len(self.parents)

    @property
    def old_to_new(self) -> np.ndarray:
        return np.arange(self.n_old)

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_old:
            raise ValueError("field size does not match the coarse mesh")
        out = np.empty((self.n_new,) + values.shape[1:], dtype=float)
        out[: self.n_old] = values
        for k, (a, b) in enumerate(self.parents):
            out[self.n_old + k] = 0.5 * (out[a] + out[b])
        return out


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def refine(mesh: Mesh, marked) -> tuple[Mesh, Prolongation]:
    """Bisect the marked triangles and close the mesh conformingly.

    Returns the refined mesh and the prolongation from the input mesh.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_triangles):
        raise IndexError("marked triangle index out of range")
    if marked.size == 0:
        return mesh, Prolongation(mesh.n_vertices, np.zeros((0, 2), dtype=np.int64))

    tris = [tuple(t) for t in mesh.triangles.tolist()]
    gens = mesh.generation.tolist()

    # refinement edge of (a, b, c) is (b, c)
    ref_edges = [_key(t[1], t[2]) for t in tris]
    edge_to_tris: dict[tuple[int, int], list[int]] = {}
    for i, (a, b, c) in enumerate(tris):
        for e in (_key(b, c), _key(c, a), _key(a, b)):
            edge_to_tris.setdefault(e, []).append(i)

    flagged: set[tuple[int, int]] = set()
    stack = [ref_edges[i] for i in marked.tolist()]
    while stack:
        e = stack.pop()
        if e in flagged:
            continue
        flagged.add(e)
        # any triangle containing a flagged edge must also bisect its own refinement edge
        for i in edge_to_tris[e]:
            r = ref_edges[i]
            if r not in flagged:
                stack.append(r)

    vertices = mesh.vertices.tolist()
    midpoint: dict[tuple[int, int], int] = {}
    parents: list[tuple[int, int]] = []

    def mid(e):
        m = midpoint.get(e)
        if m is None:
            a, b = e
            m = len(vertices)
            pa, pb = vertices[a], vertices[b]
            vertices.append([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])])
            midpoint[e] = m
            parents.append(e)
        return m

    out_tris: list[tuple[int, int, int]] = []
    out_gens: list[int] = []
    pending = list(zip(tris, gens))
    while pending:
        nxt = []
        for (a, b, c), g in pending:
            e = _key(b, c)
            if e in flagged:
                m = mid(e)
                nxt.append(((m, a, b), g + 1))
                nxt.append(((m, c, a), g + 1))
            else:
                out_tris.append((a, b, c))
                out_gens.append(g)
        pending = nxt

    new_edges = []
    new_labels = []
    for (a, b), lab in zip(mesh.boundary_edges.tolist(), mesh.boundary_labels.tolist()):
        stack = [(a, b)]
        segs = []
        while stack:
            p, q = stack.pop()
            m = midpoint.get(_key(p, q))
            if m is None:
                segs.append((p, q))
            else:
                stack.append((m, q))
                stack.append((p, m))
        for seg in segs:
            new_edges.append(seg)
            new_labels.append(lab)

    refined = Mesh(np.array(vertices), np.array(out_tris, dtype=np.int64),
                   np.array(new_edges, dtype=np.int64), np.array(new_labels, dtype=np.int64),
                   np.array(out_gens, dtype=np.int64))
    return refined, Prolongation(mesh.n_vertices, np.array(parents, dtype=np.int64).reshape(-1, 2))


def element_gradient_norms(mesh: Mesh, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    grad = np.einsum("tkd,tk->td", mesh.gradients, v[mesh.triangles])
    return np.hypot(grad[:, 0], grad[:, 1])


def mark_by_gradient(mesh: Mesh, v: np.ndarray, fraction: float = 0.15) -> np.ndarray:
    """Triangles in the top ``fraction`` of element-wise |grad v|.

    Ties are broken by the lower triangle index.  A constant field yields the
    first ``ceil(fraction * nt)`` triangles; callers decide whether that is
    informative.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    g = element_gradient_norms(mesh, v)
    count = math.ceil(fraction * mesh.n_triangles)
    order = np.lexsort((np.arange(mesh.n_triangles), -g))
    return np.sort(order[:count])
