"""Point location, nodal interpolation between meshes and boundary traces."""

from __future__ import annotations

import numpy as np

from .core import Label, Mesh, MeshError, arclength, boundary_distance

BRUTE_FORCE_LIMIT = 5000
BRUTE_FORCE_PAIRS = 2_000_000  # point-triangle pairs
BARY_TOL = 1e-12


def _barycentric(mesh: Mesh, tri: np.ndarray, points: np.ndarray) -> np.ndarray:
    p = mesh.vertices[mesh.triangles[tri]]
    d1 = p[..., 1, :] - p[..., 0, :]
    d2 = p[..., 2, :] - p[..., 0, :]
    r = points - p[..., 0, :]
    det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
    l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _pick(mesh, cand_tri, cand_pt, points, n_points):
    """Among candidate (triangle, point) pairs choose the best-fitting triangle per point."""
    lam = _barycentric(mesh, cand_tri, points[cand_pt])
    score = lam.min(axis=1)
    ok = score >= -BARY_TOL
    tri = np.full(n_points, -1, dtype=np.int64)
    bary = np.zeros((n_points, 3))
    idx = np.flatnonzero(ok)
    # larger min-barycentric wins; ties resolved by first occurrence (lowest triangle)
    order = idx[np.lexsort((cand_tri[idx], -score[idx]))]
    pts = cand_pt[order]
    _, first = np.unique(pts, return_index=True)
    chosen = order[first]
    tri[cand_pt[chosen]] = cand_tri[chosen]
    bary[cand_pt[chosen]] = lam[chosen]
    return tri, bary


def locate(mesh: Mesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Containing triangle (-1 if none) and barycentric coordinates per point."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 3))
    if mesh.n_triangles < BRUTE_FORCE_LIMIT and n * mesh.n_triangles <= BRUTE_FORCE_PAIRS:
        return _locate_brute(mesh, points)
    return _locate_buckets(mesh, points)


def _locate_brute(mesh, points):
    n = len(points)
    tri = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    chunk = max(1, 2_000_000 // max(mesh.n_triangles, 1))
    all_t = np.arange(mesh.n_triangles)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        m = sl.stop - sl.start
        cand_tri = np.tile(all_t, m)
        cand_pt = np.repeat(np.arange(m), mesh.n_triangles)
        t, b = _pick(mesh, cand_tri, cand_pt, points[sl], m)
        tri[sl], bary[sl] = t, b
    return tri, bary


def _locate_buckets(mesh, points):
    p = mesh.vertices[mesh.triangles]
    lo, hi = p.min(axis=1), p.max(axis=1)
    origin = mesh.vertices.min(axis=0)
    extent = np.maximum(mesh.vertices.max(axis=0) - origin, 1e-300)
    nb = max(1, int(np.sqrt(mesh.n_triangles / 2.0)))
    cell = extent / nb
    pad = 1e-12 * extent

    def cell_index(xy):
        return np.clip(np.floor((xy - origin) / cell).astype(np.int64), 0, nb - 1)

    i0, i1 = cell_index(lo - pad), cell_index(hi + pad)
    spans = (i1[:, 0] - i0[:, 0] + 1) * (i1[:, 1] - i0[:, 1] + 1)
    tri_ids = np.repeat(np.arange(mesh.n_triangles), spans)
    offs = np.arange(spans.sum()) - np.repeat(np.cumsum(spans) - spans, spans)
    width = np.repeat(i1[:, 0] - i0[:, 0] + 1, spans)
    bx = np.repeat(i0[:, 0], spans) + offs % width
    by = np.repeat(i0[:, 1], spans) + offs // width
    key = bx * nb + by
    order = np.argsort(key, kind="stable")
    key, tri_ids = key[order], tri_ids[order]
    starts = np.searchsorted(key, np.arange(nb * nb), side="left")
    stops = np.searchsorted(key, np.arange(nb * nb), side="right")

    pc = cell_index(points)
    pk = pc[:, 0] * nb + pc[:, 1]
    counts = stops[pk] - starts[pk]
    cand_pt = np.repeat(np.arange(len(points)), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    cand_tri = tri_ids[np.repeat(starts[pk], counts) + offs]
    return _pick(mesh, cand_tri, cand_pt, points, len(points))


def evaluate(mesh: Mesh, field: np.ndarray, points: np.ndarray, fill: float = 0.0):
    """P1 point evaluation; returns values and the mask of located points."""
    field = np.asarray(field, dtype=float)
    tri, bary = locate(mesh, points)
    found = tri >= 0
    shape = (len(tri),) + field.shape[1:]
    out = np.full(shape, fill, dtype=float)
    vals = field[mesh.triangles[tri[found]]]
    out[found] = np.einsum("pk,pk...->p...", bary[found], vals)
    return out, found


def interpolate_nodal(src: Mesh, field: np.ndarray, dst: Mesh, return_missing: bool = False):
    """Evaluate a P1 field of ``src`` at the vertices of ``dst``.

    Destination vertices outside the source mesh (inside a hole) get 0 and
    are reported when ``return_missing`` is set.  An uncovered vertex on the
    outer boundary breaks the shared-boundary contract and raises.
    """
    field = np.asarray(field, dtype=float)
    if field.shape[0] != src.n_vertices:
        raise ValueError("field size does not match the source mesh")
    if src is dst:
        out = field.copy()
        return (out, np.zeros(0, dtype=np.int64)) if return_missing else out
    out, found = evaluate(src, field, dst.vertices)
    missing = np.flatnonzero(~found)
    if missing.size:
        on_outer = boundary_distance(dst.vertices[missing]) <= 1e-12
        if np.any(on_outer):
            raise MeshError(f"destination boundary vertex {missing[on_outer][0]} is not covered by the source mesh")
    return (out, missing) if return_missing else out


def boundary_trace(mesh: Mesh, field: np.ndarray, labels=(Label.SIGMA_N, Label.SIGMA_D)):
    """Field values at vertices of edges with the given labels, ordered by arc length.

    Returns ``(s, vertex_ids, values)``; arc length runs counterclockwise from
    (-1, -1).  Cavity edges have no arc-length parameter and are skipped.
    """
    if isinstance(labels, (Label, int)):
        labels = (labels,)
    labels = tuple(Label(lab) for lab in labels if Label(lab) != Label.CAVITY)
    if not labels:
        return np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros((0,) + np.shape(field)[1:])
    ids = mesh.vertices_with_label(*labels)
    field = np.asarray(field, dtype=float)
    s = arclength(mesh.vertices[ids])
    order = np.argsort(s, kind="stable")
    return s[order], ids[order], field[ids[order]]
