"""Quick invariant suite behind ``kvcavity selftest``; runs in a few seconds."""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..fem import IsotropicMaterial, get_load, load_vector, solve_prescribed
from ..functional import Objective, kv_value
from ..mesh import evaluate, generate_square_mesh, inner_band, read_mesh, refine, write_mesh
from ..pdas import ObstacleQP, pdas_solve, projected_gauss_seidel

MATERIAL = IsotropicMaterial(0.5, 1.0)


def check_patch(rng):
    mesh = generate_square_mesh(8)
    B = rng.normal(size=(2, 2))
    c = rng.normal(size=2)
    exact = mesh.vertices @ B.T + c
    outer = mesh.outer_vertices
    u = solve_prescribed(mesh, MATERIAL, outer, exact[outer])
    err = np.abs(u - exact).max()
    return err <= 1e-10, f"affine patch error {err:.2e}"


def _objective(mesh, rng, delta=1e-2):
    loads = [get_load(n).nodal(mesh) for n in ("g1", "g2")]
    traces = [0.1 * rng.normal(size=(mesh.n_vertices, 2)) for _ in loads]
    return Objective(mesh, MATERIAL, loads, traces, delta, 0.1, 1.0 / (16 * np.pi))


def _interior_field(mesh, rng):
    v = rng.uniform(size=mesh.n_vertices)
    v[inner_band(mesh, 0.1)] = 0.0
    return v


def check_identities(rng):
    mesh = generate_square_mesh(8)
    obj = _objective(mesh, rng)
    v = _interior_field(mesh, rng)
    st = obj.states(v)
    e = obj.energy(v, st)
    work = float(load_vector(mesh, obj.loads[0]) @ st.neumann[0].ravel())
    energy = float(np.dot(st.factors, st.energies_n[0]))
    w_err = abs(energy - work) / abs(work)
    kv = sum(kv_value(mesh, un, ud, st.factors, MATERIAL) for un, ud in zip(st.neumann, st.dirichlet))
    k_err = abs(kv - e.kv) / max(abs(kv), 1e-300)
    return max(w_err, k_err) <= 1e-8, f"work identity {w_err:.2e}, KV split {k_err:.2e}"


def check_gradient(rng):
    mesh = generate_square_mesh(8)
    obj = _objective(mesh, rng)
    v = np.clip(_interior_field(mesh, rng), 0.2, 0.8)
    v[inner_band(mesh, 0.1)] = 0.0
    theta = rng.normal(size=mesh.n_vertices)
    theta[inner_band(mesh, 0.1)] = 0.0
    t = 1e-4
    fd = (obj.energy(v + t * theta).total - obj.energy(v - t * theta).total) / (2 * t)
    an = obj.gradient_action(v, theta)
    err = abs(fd - an) / abs(fd)
    return err <= 1e-4, f"directional derivative rel. error {err:.2e}"


def check_pdas(rng):
    worst = 0.0
    for _ in range(3):
        n = int(rng.integers(20, 60))
        off = -rng.uniform(0.1, 0.9, size=n - 1)
        diag = 2.0 + rng.uniform(size=n)
        A = sp.diags([off, diag, off], [-1, 0, 1], format="csr")
        qp = ObstacleQP(A, rng.normal(scale=2.0, size=n), rng.choice(n, size=3, replace=False))
        v, cert, _ = pdas_solve(qp)
        if not cert.valid:
            return False, "KKT certificate invalid"
        worst = max(worst, np.abs(v - projected_gauss_seidel(qp)).max())
    return worst <= 1e-8, f"PDAS vs PGS max difference {worst:.2e}"


def check_refinement(rng):
    mesh = generate_square_mesh(6)
    v = rng.uniform(size=mesh.n_vertices)
    marked = rng.choice(mesh.n_triangles, size=10, replace=False)
    fine, prolong = refine(mesh, marked)
    fine.validate()
    pts = rng.uniform(-1, 1, size=(200, 2))
    a, _ = evaluate(mesh, v, pts)
    b, _ = evaluate(fine, prolong.apply(v), pts)
    err = np.abs(a - b).max()
    return err <= 1e-12, f"prolongation mismatch {err:.2e}"


def check_roundtrip(rng):
    mesh, _ = refine(generate_square_mesh(4), [0, 5])
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "m.kvmesh"
        write_mesh(mesh, path)
        back = read_mesh(path)
    ok = (np.array_equal(back.vertices, mesh.vertices) and np.array_equal(back.triangles, mesh.triangles)
          and np.array_equal(back.boundary_labels, mesh.boundary_labels))
    return ok, "KVMESH round trip"


CHECKS = [
    ("patch test", check_patch),
    ("energy identities", check_identities),
    ("gradient", check_gradient),
    ("pdas", check_pdas),
    ("refinement", check_refinement),
    ("mesh io", check_roundtrip),
]


def run_selftest(log=print, seed: int = 0) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn(np.random.default_rng(seed))
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        log(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
