"""KVMESH ASCII mesh format.

::

    KVMESH 1
    <nv> <nt> <nb>
    x y              (nv lines)
    i j k            (nt lines, 0-based, counterclockwise)
    i j LABEL        (nb lines, LABEL in SIGMA_N / SIGMA_D / CAVITY)

Tokens are whitespace separated and ``#`` starts a comment.
"""

from __future__ import annotations

import os

import numpy as np

from .core import Label, Mesh, MeshError


class KVMeshParseError(MeshError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


def write_mesh(mesh: Mesh, path: str | os.PathLike) -> None:
    lines = ["KVMESH 1", f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines += [f"{i} {j} {Label(lab).name}"
              for (i, j), lab in zip(mesh.boundary_edges.tolist(), mesh.boundary_labels.tolist())]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path: str | os.PathLike) -> Mesh:
    """Parse a KVMESH file and validate orientation and labelling."""
    records = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if text:
                records.append((lineno, text.split()))
    last_line = records[-1][0] if records else 0

    def take(idx, what):
        if idx >= len(records):
            raise KVMeshParseError(path, last_line + 1, f"unexpected end of file, expected {what}")
        return records[idx]

    lineno, tok = take(0, "header")
    if tok != ["KVMESH", "1"]:
        raise KVMeshParseError(path, lineno, "malformed header, expected 'KVMESH 1'")
    lineno, tok = take(1, "counts")
    try:
        nv, nt, nb = (int(t) for t in tok)
    except ValueError:
        raise KVMeshParseError(path, lineno, "malformed counts line, expected '<nv> <nt> <nb>'") from None
    pos = 2
    vertices = np.empty((nv, 2))
    for i in range(nv):
        lineno, tok = take(pos + i, f"vertex {i}")
        try:
            vertices[i] = [float(t) for t in tok]
        except ValueError:
            raise KVMeshParseError(path, lineno, "malformed vertex line") from None
    pos += nv
    triangles = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        lineno, tok = take(pos + i, f"triangle {i}")
        try:
            triangles[i] = [int(t) for t in tok]
        except ValueError:
            raise KVMeshParseError(path, lineno, "malformed triangle line") from None
    pos += nt
    edges = np.empty((nb, 2), dtype=np.int64)
    labels = np.empty(nb, dtype=np.int64)
    for i in range(nb):
        lineno, tok = take(pos + i, f"boundary edge {i}")
        if len(tok) != 3:
            raise KVMeshParseError(path, lineno, "malformed boundary edge line")
        try:
            edges[i] = [int(tok[0]), int(tok[1])]
        except ValueError:
            raise KVMeshParseError(path, lineno, "malformed boundary edge line") from None
        try:
            labels[i] = Label[tok[2]]
        except KeyError:
            raise KVMeshParseError(path, lineno, f"unknown label {tok[2]!r}") from None
    pos += nb
    if pos < len(records):
        raise KVMeshParseError(path, records[pos][0], "trailing data after boundary edges")

    mesh = Mesh(vertices, triangles, edges, labels)
    areas = mesh.signed_areas
    bad = np.flatnonzero(areas <= 0.0)
    if bad.size:
        kind = "clockwise orientation" if areas[bad[0]] < 0 else "degenerate (zero area)"
        raise KVMeshParseError(path, records[2 + nv + bad[0]][0], f"triangle {bad[0]} has {kind}")
    mesh.validate()
    return mesh
