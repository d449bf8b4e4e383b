"""Acceptance criteria 1-10, one PASS/FAIL line each.

The full reconstructions are shared session fixtures; together they take
roughly ten minutes on one core.
"""

import math
import time

import numpy as np
import pytest

from kvcavity.fem import (
    ErsatzCoefficient, IsotropicMaterial, get_load, load_vector, operator_for, solve_neumann_state, solve_prescribed,
)
from kvcavity.functional import Objective, kv_value
from kvcavity.inversion import (
    DESCENT_SLACK, InversionConfig, initial_state, jaccard, reconstruction_centroid, run, step,
)
from kvcavity.io.cli import main
from kvcavity.io.render import level_set_segments
from kvcavity.mesh import ShapeSpec, generate_square_mesh, inner_band
from kvcavity.pdas import pdas_solve, projected_gauss_seidel
from kvcavity.synthdata import generate_measurements, self_consistent_measurements

from test_pdas import tridiagonal_qp

pytestmark = pytest.mark.slow

DISK = ShapeSpec.disk((0.0, 0.0), 0.3)
LOADS = [get_load("g1"), get_load("g2")]
EPS = 1.0 / (16.0 * math.pi)
COARSE, FINE = 48, 192
MATERIALS = {"(0.5,1)": IsotropicMaterial(0.5, 1.0), "(1,0.2)": IsotropicMaterial(1.0, 0.2),
             "(1,-0.2)": IsotropicMaterial(1.0, -0.2)}
# noiseless runs use the lower end of the regularisation range, the 5% run the upper end
GAMMA_CLEAN, GAMMA_NOISY = 0.05, 0.1


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def reconstruct(material, gamma, noise=0.0, seed=0):
    coarse = generate_square_mesh(COARSE)
    meas = generate_measurements([DISK], material, LOADS, FINE, coarse, noise=noise, seed=seed)
    t0 = time.perf_counter()
    state = run(InversionConfig(gamma=gamma, max_iterations=20000, material=material), meas, mesh=coarse)
    return state, time.perf_counter() - t0, meas


@pytest.fixture(scope="session")
def full_runs():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = reconstruct(MATERIALS[name], GAMMA_CLEAN)
        return cache[name]
    return get


@pytest.fixture(scope="session")
def noisy_run():
    return reconstruct(MATERIALS["(0.5,1)"], GAMMA_NOISY, noise=0.05, seed=0)


def admissible(mesh, rng):
    v = rng.uniform(size=mesh.n_vertices)
    v[inner_band(mesh, 0.1)] = 0.0
    return v


def random_objective(mesh, material, seed):
    rng = np.random.default_rng(seed)
    traces = [0.1 * rng.normal(size=(mesh.n_vertices, 2)) for _ in LOADS]
    return Objective(mesh, material, [g.nodal(mesh) for g in LOADS], traces, 1e-2, 0.1, EPS)


@pytest.mark.parametrize("name", list(MATERIALS))
class TestPerMaterial:
    def test_c1_patch(self, name, report):
        mat = MATERIALS[name]
        t0 = time.perf_counter()
        mesh = generate_square_mesh(16)
        rng = np.random.default_rng(0)
        B, c = rng.normal(size=(2, 2)), rng.normal(size=2)
        exact = mesh.vertices @ B.T + c
        u = solve_prescribed(mesh, mat, mesh.outer_vertices, exact[mesh.outer_vertices])
        inner = np.setdiff1d(np.arange(mesh.n_vertices), mesh.outer_vertices)
        err = np.abs(u[inner] - exact[inner]).max()
        dt = time.perf_counter() - t0
        assert report(1, err <= 1e-10 and dt < 1.0, f"{name} interior error {err:.2e} (<= 1e-10), {dt:.2f}s (< 1 s)")

    def test_c2_identities(self, name, report):
        mat = MATERIALS[name]
        t0 = time.perf_counter()
        mesh = generate_square_mesh(32)
        work_err = decomp_err = 0.0
        for seed in range(3):
            rng = np.random.default_rng(seed)
            v = admissible(mesh, rng)
            e = ErsatzCoefficient(1e-2, v)
            g = LOADS[seed % 2].nodal(mesh)
            u = solve_neumann_state(mesh, mat, e, g)
            energy = u.ravel() @ (operator_for(mesh, mat).stiffness(e.factors(mesh)) @ u.ravel())
            work = load_vector(mesh, g) @ u.ravel()
            work_err = max(work_err, abs(energy - work) / abs(work))
            obj = random_objective(mesh, mat, seed)
            st = obj.states(v)
            kv = sum(kv_value(mesh, a, b, st.factors, mat) for a, b in zip(st.neumann, st.dirichlet))
            en = obj.energy(v, st)
            decomp_err = max(decomp_err, abs(kv - (en.jn + en.jd + en.jnd)) / abs(kv))
        dt = time.perf_counter() - t0
        ok = work_err <= 1e-8 and decomp_err <= 1e-8 and dt < 5.0
        assert report(2, ok, f"{name} work {work_err:.1e}, decomposition {decomp_err:.1e} (<= 1e-8 rel), "
                             f"{dt:.2f}s (< 5 s)")

    def test_c3_zero_residual(self, name, report):
        mat = MATERIALS[name]
        mesh = generate_square_mesh(24)
        v = admissible(mesh, np.random.default_rng(5))
        meas = self_consistent_measurements(mesh, mat, LOADS, v, 1e-2)
        obj = Objective(mesh, mat, [g.nodal(mesh) for g in LOADS], [m.f for m in meas], 1e-2, 0.1, EPS)
        kv = obj.energy(v).kv
        assert report(3, abs(kv) <= 1e-9, f"{name} J_KV = {kv:.2e} (<= 1e-9 abs)")

    def test_c4_gradient(self, name, report):
        mat = MATERIALS[name]
        mesh = generate_square_mesh(16)
        worst = 0.0
        for seed in range(5):
            rng = np.random.default_rng(seed)
            obj = random_objective(mesh, mat, seed)
            v = 0.2 + 0.6 * admissible(mesh, rng)
            v[inner_band(mesh, 0.1)] = 0.0
            theta = rng.normal(size=mesh.n_vertices)
            theta[inner_band(mesh, 0.1)] = 0.0
            t = 1e-4
            fd = (obj.energy(v + t * theta).total - obj.energy(v - t * theta).total) / (2 * t)
            worst = max(worst, abs(fd - obj.gradient_action(v, theta)) / abs(fd))
        assert report(4, worst <= 1e-4, f"{name} worst relative FD error {worst:.2e} over 5 directions (<= 1e-4)")

    def test_c5_pdas(self, name, report):
        mat = MATERIALS[name]
        worst, max_it, valid = 0.0, 0, True
        for seed in range(10):
            qp = tridiagonal_qp(np.random.default_rng(1000 + seed))
            v, cert, it = pdas_solve(qp)
            worst, max_it, valid = max(worst, np.abs(v - projected_gauss_seidel(qp)).max()), max(max_it, it), \
                valid and cert.valid
        mesh = generate_square_mesh(24)
        meas = generate_measurements([DISK], mat, LOADS, 96, mesh)
        cfg = InversionConfig(material=mat)
        state = initial_state(mesh, cfg, meas)
        for target in (0, 20, 100):
            while state.n < target:
                step(state, cfg)
            drive = state.problem.objective.drive(state.states)
            qp = state.problem.qp(state.v, drive, state.tau, cfg.gamma, cfg.epsilon)
            v, cert, it = pdas_solve(qp, v_init=state.v)
            assert cert.tol == pytest.approx(1e-10 * np.abs(qp.b).max())
            worst, max_it, valid = max(worst, np.abs(v - projected_gauss_seidel(qp)).max()), max(max_it, it), \
                valid and cert.valid
        ok = worst <= 1e-8 and max_it <= 30 and valid
        assert report(5, ok, f"{name} max |PDAS - PGS| {worst:.1e} (<= 1e-8), max outer {max_it} (<= 30), "
                             f"certificates valid={valid} over 10 random + 3 inversion QPs")

    def test_c6_monotone(self, name, full_runs, report):
        state, elapsed, _ = full_runs(name)
        totals = np.array([r.total for r in state.history])
        rise = float(np.max(np.diff(totals))) if len(totals) > 1 else 0.0
        ok = rise <= DESCENT_SLACK and all(r.accepted == 1 for r in state.history)
        assert report(6, ok, f"{name} largest energy change over {len(totals)} accepted steps {rise:.2e} "
                             f"(<= 1e-12); {state.rejected} rejections; {elapsed:.0f}s")


def test_c6_forced_rejection(report):
    mesh = generate_square_mesh(24)
    meas = generate_measurements([DISK], MATERIALS["(0.5,1)"], LOADS, 96, mesh)
    cfg = InversionConfig()
    state = initial_state(mesh, cfg, meas)
    e0 = state.energy.total
    state.tau = 1.0
    rejected = 0
    while not step(state, cfg)[1]:
        rejected += 1
    ok = rejected >= 1 and state.history[-1].total <= e0 + DESCENT_SLACK
    assert report(6, ok, f"tau = 1 rejected {rejected} times before an accepted tau = {state.history[-1].tau:g}")


def test_c7_circle(full_runs, report):
    state, elapsed, _ = full_runs("(0.5,1)")
    jac = jaccard(state.mesh, state.v, DISK)
    ok = jac >= 0.6 and state.n <= 20000 and elapsed <= 900
    assert report(7, ok, f"Jaccard {jac:.3f} (>= 0.6), n = {state.n} (<= 20000, converged={state.converged}), "
                         f"{elapsed:.0f}s (<= 900 s)")


def test_c7_contour(full_runs, report):
    state, _, _ = full_runs("(0.5,1)")
    segs = level_set_segments(state.mesh, state.v)
    cell = 2.0 / COARSE
    dist = np.abs(np.linalg.norm(segs.reshape(-1, 2), axis=1) - DISK.size[0]).max() if len(segs) else math.inf
    assert report(7, dist <= 2 * cell, f"{{v = 0.5}} contour within {dist / cell:.2f} cells of the circle (<= 2)")


def test_c8_noise(noisy_run, report):
    state, elapsed, meas = noisy_run
    level = meas[0].noise_level_reported
    jac = jaccard(state.mesh, state.v, DISK)
    c = reconstruction_centroid(state.mesh, state.v)
    off = float(np.hypot(*c)) if np.all(np.isfinite(c)) else math.inf
    ok = abs(level - 0.05) <= 0.002 and jac >= 0.45 and off <= 0.15
    assert report(8, ok, f"noise {level:.4f}, converged={state.converged} n={state.n}, Jaccard {jac:.3f} (>= 0.45), "
                         f"centroid ({c[0]:.3f}, {c[1]:.3f}) off by {off:.3f} (<= 0.15), {elapsed:.0f}s")


def test_c9_lame_sweep(full_runs, report):
    # criteria 1-6 are parametrised over the three materials above; here the gate itself
    with pytest.raises(ValueError):
        IsotropicMaterial(1.0, -1.0)
    with pytest.raises(ValueError):
        IsotropicMaterial(0.0, 1.0)
    IsotropicMaterial(1.0, -0.2)
    rows = []
    for name in MATERIALS:
        state, elapsed, _ = full_runs(name)
        rows.append(f"{name}: Jaccard {jaccard(state.mesh, state.v, DISK):.3f}, n={state.n}")
    assert report(9, True, "lambda + mu > 0 gate enforced; " + "; ".join(rows))


def test_c10_determinism(tmp_path, report):
    cfg = tmp_path / "run.toml"
    cfg.write_text('coarse_n = 16\nmu = 0.5\nlam = 1.0\nnoise = 0.05\nseed = 7\nsnapshot_stride = 1000\n'
                   '[inversion]\ngamma = 0.1\nn_ref = 20\ntol_ref = 1.0\n'
                   '[[measurement]]\nload = "g1"\n[[measurement]]\nload = "g2"\n'
                   '[[shape]]\nkind = "disk"\nradius = 0.3\n')
    for d in ("a", "b"):
        assert main(["invert", "--config", str(cfg), "--out", str(tmp_path / d), "--max-iter", "60"]) == 0
    a, b = ((tmp_path / d / "history.csv").read_bytes() for d in "ab")
    nrows = a.count(b"\n") - 1
    assert report(10, a == b and nrows == 60, f"two runs, {nrows} history rows, bit-identical={a == b}")
