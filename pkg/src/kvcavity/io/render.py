"""Raster (PGM) and vector (SVG) pictures of a phase field."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from ..mesh import Mesh, ShapeSpec, evaluate

SIZE = 512


def pixel_centers(size: int = SIZE) -> np.ndarray:
    """(size*size, 2) pixel centres in row-major order, top row first."""
    c = -1.0 + (np.arange(size) + 0.5) * (2.0 / size)
    X, Y = np.meshgrid(c, c[::-1])
    return np.column_stack([X.ravel(), Y.ravel()])


def rasterize(mesh: Mesh, v: np.ndarray, size: int = SIZE) -> np.ndarray:
    """Gray levels 0..255 of clip(v, 0, 1) at pixel centres; 0 outside the mesh."""
    vals, _ = evaluate(mesh, np.asarray(v, dtype=float), pixel_centers(size), fill=0.0)
    return np.rint(255.0 * np.clip(vals, 0.0, 1.0)).astype(np.int64).reshape(size, size)


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.int64)
    h, w = image.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(map(str, row)) for row in image.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    words = []
    for line in Path(path).read_text().splitlines():
        words += line.split("#", 1)[0].split()
    if not words or words[0] != "P2":
        raise ValueError(f"{path}: not an ASCII PGM")
    w, h, maxval = int(words[1]), int(words[2]), int(words[3])
    data = np.array(words[4:4 + w * h], dtype=np.int64)
    if data.size != w * h or np.any(data > maxval):
        raise ValueError(f"{path}: malformed pixel data")
    return data.reshape(h, w)


def level_set_segments(mesh: Mesh, v: np.ndarray, level: float = 0.5) -> np.ndarray:
    """Marching triangles: (k, 2, 2) array of segments of {v = level}.

    A vertex counts as inside when ``v >= level``; each triangle with mixed
    vertices contributes the segment joining the two crossing points.
    """
    v = np.asarray(v, dtype=float)
    tri = mesh.triangles
    vals = v[tri]
    inside = vals >= level
    count = inside.sum(axis=1)
    mixed = np.flatnonzero((count > 0) & (count < 3))
    segs = np.empty((len(mixed), 2, 2))
    xy = mesh.vertices
    for row, t in enumerate(mixed):
        pts = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if inside[t, a] != inside[t, b]:
                va, vb = vals[t, a], vals[t, b]
                s = (level - va) / (vb - va)
                pts.append(xy[tri[t, a]] + s * (xy[tri[t, b]] - xy[tri[t, a]]))
        segs[row] = pts
    return segs


def _svg_xy(p, size):
    return (p[..., 0] + 1.0) * 0.5 * size, (1.0 - p[..., 1]) * 0.5 * size


def write_svg(path, mesh: Mesh, v: np.ndarray, truth: Sequence[ShapeSpec] = (), level: float = 0.5,
              size: int = SIZE) -> int:
    """Frame, the reconstructed contour and the truth outline; returns the segment count."""
    segs = level_set_segments(mesh, v, level)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect x="0" y="0" width="{size}" height="{size}" fill="white" stroke="black"/>']
    if len(segs):
        x, y = _svg_xy(segs, size)
        path_d = " ".join(f"M{x[i, 0]:.3f},{y[i, 0]:.3f}L{x[i, 1]:.3f},{y[i, 1]:.3f}" for i in range(len(segs)))
        out.append(f'<path class="contour" d="{path_d}" stroke="red" stroke-width="1.5" fill="none"/>')
    for shape in truth:
        for poly in shape.outline(256):
            x, y = _svg_xy(poly, size)
            pts = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(x, y))
            out.append(f'<polygon class="truth" points="{pts}" stroke="blue" stroke-dasharray="4,3" '
                       f'fill="none"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return len(segs)
