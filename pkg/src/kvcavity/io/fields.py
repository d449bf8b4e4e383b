"""Readers and writers for fields, histories, measurements and checkpoints.

Floats are written with ``repr`` so every file round-trips bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..fem import get_load
from ..inversion import HISTORY_COLUMNS, HistoryRow, InversionState
from ..mesh import Mesh, read_mesh, side_of, write_mesh
from ..synthdata import BoundaryData, Measurement, NoiseSpec


class FormatError(ValueError):
    pass


# --------------------------------------------------------------------- VTK

@dataclass
class VtkData:
    points: np.ndarray
    triangles: np.ndarray
    point_data: dict


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, title: str = "kvcavity field") -> None:
    """Legacy ASCII unstructured grid with scalar (nv,) and vector (nv, 2) point data."""
    nv, nt = mesh.n_vertices, mesh.n_triangles
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    out.append(f"CELL_TYPES {nt}")
    out += ["5"] * nt
    if point_data:
        out.append(f"POINT_DATA {nv}")
        for name, values in point_data.items():
            if " " in name:
                raise ValueError("field names may not contain spaces")
            arr = np.asarray(values, dtype=float)
            if arr.shape == (nv,):
                out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                out += [repr(x) for x in arr.tolist()]
            elif arr.shape == (nv, 2):
                out.append(f"VECTORS {name} double")
                out += [f"{a!r} {b!r} 0.0" for a, b in arr.tolist()]
            else:
                raise ValueError(f"field {name!r} has shape {arr.shape}, expected ({nv},) or ({nv}, 2)")
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk(path) -> VtkData:
    tokens = Path(path).read_text().split("\n")
    if not tokens or not tokens[0].startswith("# vtk DataFile"):
        raise FormatError(f"{path}: not a legacy VTK file")
    if len(tokens) < 4 or tokens[2].strip() != "ASCII" or tokens[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise FormatError(f"{path}: only ASCII unstructured grids are supported")
    words = " ".join(tokens[4:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(words):
            raise FormatError(f"{path}: truncated file")
        chunk = words[pos:pos + n]
        pos += n
        return chunk

    points = triangles = None
    data = {}
    npts = 0
    while pos < len(words):
        key = take(1)[0]
        if key == "POINTS":
            npts, _ = int(take(2)[0]), None
            points = np.array(take(3 * npts), dtype=float).reshape(npts, 3)[:, :2]
        elif key == "CELLS":
            nc, size = (int(t) for t in take(2))
            raw = np.array(take(size), dtype=np.int64).reshape(nc, 4)
            if np.any(raw[:, 0] != 3):
                raise FormatError(f"{path}: only triangles are supported")
            triangles = raw[:, 1:]
        elif key == "CELL_TYPES":
            nc = int(take(1)[0])
            take(nc)
        elif key == "POINT_DATA":
            take(1)
        elif key == "SCALARS":
            name, _, ncomp = take(3)
            if take(2)[0] != "LOOKUP_TABLE":
                raise FormatError(f"{path}: expected LOOKUP_TABLE after SCALARS {name}")
            data[name] = np.array(take(npts * int(ncomp)), dtype=float)
        elif key == "VECTORS":
            name, _ = take(2)
            data[name] = np.array(take(3 * npts), dtype=float).reshape(npts, 3)[:, :2]
        else:
            raise FormatError(f"{path}: unsupported section {key!r}")
    if points is None or triangles is None:
        raise FormatError(f"{path}: POINTS or CELLS missing")
    return VtkData(points, triangles, data)


# --------------------------------------------------------------------- CSV fields

def write_field_csv(path, mesh: Mesh, fields: dict) -> None:
    cols = []
    names = ["vertex", "x", "y"]
    for name, values in fields.items():
        arr = np.asarray(values, dtype=float).reshape(mesh.n_vertices, -1)
        if arr.shape[1] == 1:
            names.append(name)
        else:
            names += [f"{name}_{c}" for c in "xy"[:arr.shape[1]]]
        cols.append(arr)
    table = np.hstack([mesh.vertices] + cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i, row in enumerate(table.tolist()):
            w.writerow([i] + [repr(x) for x in row])


def read_field_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    arr = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: arr[:, k] for k, name in enumerate(header)}


# --------------------------------------------------------------------- history

def _format(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_history(path, rows, append: bool = False) -> None:
    mode = "a" if append and os.path.exists(path) else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if mode == "w":
            w.writerow(HISTORY_COLUMNS)
        for row in rows:
            w.writerow([_format(x) for x in row.as_tuple()])


def read_history(path) -> list[HistoryRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != HISTORY_COLUMNS:
            raise FormatError(f"{path}: unexpected history header {header}")
        out = []
        ints = {"n", "accepted", "rejected", "n_triangles"}
        for row in reader:
            vals = {k: (int(x) if k in ints else float(x)) for k, x in zip(header, row)}
            out.append(HistoryRow(**vals))
    return out


# --------------------------------------------------------------------- measurements

def write_measurement(path, m: Measurement) -> None:
    """Boundary samples of the (noisy) trace: ``label_side, arclength, fx, fy``."""
    data = m.noisy_data
    if data is None:
        raise ValueError("measurement carries no boundary samples")
    s_nodes = data.s
    sides = _sides_at(s_nodes)
    lines = [f"# load = {m.load.name}", f"# seed = {m.noise.seed}", f"# a = {m.noise.amplitude!r}",
             f"# level = {m.noise_level_reported!r}", "label_side,arclength,fx,fy"]
    for s, side, dirichlet, (fx, fy) in zip(s_nodes.tolist(), sides, data.on_dirichlet.tolist(),
                                             data.values.tolist()):
        label = "SIGMA_D" if dirichlet else "SIGMA_N"
        lines.append(f"{label}:{side},{s!r},{fx!r},{fy!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _sides_at(s):
    # inverse of the arc-length parametrisation
    s = np.asarray(s, dtype=float)
    pts = np.empty((len(s), 2))
    for k, (lo, p0, d) in enumerate(((0, (-1, -1), (1, 0)), (2, (1, -1), (0, 1)),
                                     (4, (1, 1), (-1, 0)), (6, (-1, 1), (0, -1)))):
        sel = (s >= lo) & (s < lo + 2)
        pts[sel] = np.asarray(p0) + np.outer(s[sel] - lo, d)
    return side_of(pts).tolist()


def read_measurement(path, mesh: Mesh | None = None) -> Measurement:
    """Inverse of :func:`write_measurement`; with ``mesh`` the nodal trace is filled in."""
    meta = {}
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
                continue
            if line.startswith("label_side"):
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 columns")
            try:
                rows.append((parts[0].startswith("SIGMA_D"), float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    for key in ("load", "seed", "a", "level"):
        if key not in meta:
            raise FormatError(f"{path}: header lacks '{key}'")
    if not rows:
        raise FormatError(f"{path}: no samples")
    dirichlet = np.array([r[0] for r in rows])
    s = np.array([r[1] for r in rows])
    values = np.array([(r[2], r[3]) for r in rows])
    data = BoundaryData(s, values, dirichlet)
    f = data.on(mesh) if mesh is not None else np.zeros((0, 2))
    noise = NoiseSpec(float(meta["a"]), int(meta["seed"]))
    return Measurement(get_load(meta["load"]), f, float(meta["level"]), data, None, noise)


# --------------------------------------------------------------------- checkpoints

_STATE_KEYS = ("n", "tau", "step_norm", "accepted", "rejected", "consecutive_rejections", "converged")


def write_checkpoint(directory, state: InversionState) -> None:
    """Mesh, phase field and loop counters; written atomically via rename."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_mesh(state.mesh, d / "mesh.kvmesh.tmp")
    payload = {k: getattr(state, k) for k in _STATE_KEYS}
    payload["step_norm"] = _json_float(state.step_norm)
    payload["v"] = [float(x) for x in state.v]
    payload["generation"] = state.mesh.generation.tolist()
    (d / "state.json.tmp").write_text(json.dumps(payload))
    os.replace(d / "mesh.kvmesh.tmp", d / "mesh.kvmesh")
    os.replace(d / "state.json.tmp", d / "state.json")


def _json_float(x):
    return x if np.isfinite(x) else str(x)


def read_checkpoint(directory) -> InversionState:
    d = Path(directory)
    try:
        payload = json.loads((d / "state.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{d}: unreadable checkpoint ({exc})") from exc
    raw = read_mesh(d / "mesh.kvmesh")
    mesh = Mesh(raw.vertices, raw.triangles, raw.boundary_edges, raw.boundary_labels,
                np.asarray(payload.get("generation", raw.generation), dtype=np.int64))
    v = np.array(payload["v"], dtype=float)
    state = InversionState(mesh, v, float(payload["tau"]))
    for k in _STATE_KEYS:
        if k != "tau":
            setattr(state, k, payload[k])
    state.step_norm = float(payload["step_norm"])
    return state
