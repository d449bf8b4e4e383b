"""Command line driver: ``kvcavity {forward,invert,render,selftest}``.

Exit codes: 0 success, 1 numerical failure, 2 configuration or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from ..fem import SolverError
from ..inversion import InversionError, jaccard, reconstruction_centroid, run
from ..mesh import KVMeshParseError, Mesh, MeshError, ShapeSpec, generate_square_mesh
from ..pdas import PDASError
from ..synthdata import NoiseSpec, generate_measurements
from .config import ConfigError, RunConfig, load_config
from .fields import (
    FormatError, read_checkpoint, read_history, read_measurement, read_vtk, write_checkpoint,
    write_field_csv, write_history, write_measurement, write_vtk,
)
from .render import rasterize, write_pgm, write_svg

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2


def _log(msg: str) -> None:
    print(msg, flush=True)


def _out_dir(args, cfg: RunConfig | None = None) -> Path:
    out = args.out or (cfg.out if cfg is not None else None) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.inversion.seed = args.seed
    if getattr(args, "max_iter", None) is not None:
        if args.max_iter < 1:
            raise ConfigError("--max-iter must be positive", "max_iter")
        cfg.inversion = dataclasses.replace(cfg.inversion, max_iterations=args.max_iter)
    return cfg


def coarse_mesh(cfg: RunConfig) -> Mesh:
    return generate_square_mesh(cfg.coarse_n, cfg.dirichlet_sides)


def synthesize(cfg: RunConfig, mesh: Mesh, noise: float | None = None, return_fine: bool = False):
    if not cfg.shapes:
        raise ConfigError("missing required key 'shape' (the forward problem needs a cavity)", "shape")
    level = cfg.noise if noise is None else noise
    spec = NoiseSpec(0.0, cfg.seed) if level == 0 else level
    return generate_measurements(cfg.shapes, cfg.material, cfg.loads, cfg.fine_n, mesh, spec,
                                 d0=cfg.inversion.d0, seed=cfg.seed, return_fine=return_fine)


# --------------------------------------------------------------------- forward

def cmd_forward(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    mesh = coarse_mesh(cfg)
    meas, fine, states = synthesize(cfg, mesh, 0.0 if args.zero_noise else None, return_fine=True)
    names = []
    for i, m in enumerate(meas):
        name = out / f"measurement_{i}_{m.load.name}.csv"
        write_measurement(name, m)
        names.append(name)
    write_vtk(out / "forward_fine.vtk", fine, {f"u_{m.load.name}": u for m, u in zip(meas, states)},
              title="forward solution on the cavity mesh")
    level = meas[0].noise_level_reported if meas else 0.0
    _log(f"fine mesh: {fine.n_vertices} vertices, {fine.n_triangles} triangles")
    for name in names:
        _log(f"wrote {name}")
    _log(f"noise amplitude a = {meas[0].noise.amplitude:.6g}")
    _log(f"reported noise level = {level:.6f}")
    return EXIT_OK


# --------------------------------------------------------------------- invert

def cmd_invert(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    inv = cfg.inversion
    mesh = coarse_mesh(cfg)
    if args.measurements:
        meas = [read_measurement(p, mesh) for p in args.measurements]
    else:
        meas = synthesize(cfg, mesh)
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    ckpt = out / "checkpoint"
    hist_path = out / "history.csv"

    state = None
    pending = []
    if args.resume:
        state = read_checkpoint(ckpt)
        rows = read_history(hist_path) if hist_path.exists() else []
        state.history = [r for r in rows if r.n <= state.n]
        write_history(hist_path, state.history)
        _log(f"resuming at n={state.n} on {state.mesh.n_triangles} triangles")
    else:
        write_history(hist_path, [])

    def flush(st):
        write_history(hist_path, pending, append=True)
        pending.clear()
        write_checkpoint(ckpt, st)

    def callback(st, row):
        pending.append(row)
        if row.n % cfg.snapshot_stride == 0:
            write_vtk(snap_dir / f"v_{row.n:06d}.vtk", st.mesh, {"v": st.v})
            write_pgm(snap_dir / f"v_{row.n:06d}.pgm", rasterize(st.mesh, st.v))
            flush(st)
            _log(f"n={row.n} tau={row.tau:.3e} step={row.step_norm:.3e} J={row.total:.9e} "
                 f"triangles={row.n_triangles}")

    t0 = time.perf_counter()
    try:
        state = run(inv, meas, mesh=mesh if state is None else None, state=state, callback=callback)
    finally:
        if state is not None and pending:
            flush(state)
    elapsed = time.perf_counter() - t0

    write_checkpoint(ckpt, state)
    write_vtk(out / "final.vtk", state.mesh, {"v": state.v})
    write_field_csv(out / "final.csv", state.mesh, {"v": state.v})
    write_pgm(out / "final.pgm", rasterize(state.mesh, state.v))
    write_svg(out / "final.svg", state.mesh, state.v, cfg.shapes)
    summary = {"converged": bool(state.converged), "n": state.n, "accepted": state.accepted,
               "rejected": state.rejected, "step_norm": state.step_norm,
               "n_triangles": state.mesh.n_triangles, "energy": state.energy.total,
               "centroid": [float(c) for c in reconstruction_centroid(state.mesh, state.v)]}
    if cfg.shapes:
        truth = cfg.shapes[0] if len(cfg.shapes) == 1 else ShapeSpec.union(*cfg.shapes)
        summary["jaccard"] = jaccard(state.mesh, state.v, truth)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _log(f"converged={state.converged} n={state.n} rejected={state.rejected} ({elapsed:.1f}s)")
    if "jaccard" in summary:
        _log(f"jaccard={summary['jaccard']:.4f}")
    return EXIT_OK


# --------------------------------------------------------------------- render

def cmd_render(args) -> int:
    data = read_vtk(args.field)
    if args.name not in data.point_data:
        raise FormatError(f"{args.field}: no point field named {args.name!r}")
    mesh = Mesh(data.points, data.triangles, np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64))
    v = data.point_data[args.name]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(out, rasterize(mesh, v, args.size))
    shapes = load_config(args.config).shapes if args.config else []
    svg = out.with_suffix(".svg")
    nseg = write_svg(svg, mesh, v, shapes, size=args.size)
    _log(f"wrote {out} and {svg} ({nseg} contour segments)")
    return EXIT_OK


# --------------------------------------------------------------------- selftest

def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    return EXIT_OK if run_selftest(_log, seed=args.seed or 0) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kvcavity", description="Phase-field cavity identification in a 2D elastic plate.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("forward", help="synthesise boundary measurements on a fine cavity mesh")
    f.add_argument("--config", required=True)
    f.add_argument("--out")
    f.add_argument("--seed", type=int)
    f.add_argument("--max-iter", type=int, dest="max_iter", help=argparse.SUPPRESS)
    f.add_argument("--zero-noise", action="store_true", help="ignore the configured noise level")
    f.set_defaults(func=cmd_forward)

    i = sub.add_parser("invert", help="run the phase-field reconstruction")
    i.add_argument("--config", required=True)
    i.add_argument("--measurements", nargs="*", default=None,
                   help="measurement CSV files; synthesised from the config when omitted")
    i.add_argument("--out")
    i.add_argument("--seed", type=int)
    i.add_argument("--max-iter", type=int, dest="max_iter")
    i.add_argument("--resume", action="store_true", help="continue from OUT/checkpoint")
    i.set_defaults(func=cmd_invert)

    r = sub.add_parser("render", help="rasterise a VTK field to PGM and SVG")
    r.add_argument("field")
    r.add_argument("--out", required=True, help="output .pgm path; the SVG goes next to it")
    r.add_argument("--config", help="config whose shapes are drawn as the truth outline")
    r.add_argument("--name", default="v", help="point field to render")
    r.add_argument("--size", type=int, default=512)
    r.set_defaults(func=cmd_render)

    s = sub.add_parser("selftest", help="run the built-in invariant checks")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, KVMeshParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, PDASError, InversionError, MeshError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
