"""Energy terms, decomposition identity, driving term and derivative."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvcavity.fem import IsotropicMaterial, get_load, load_vector
from kvcavity.functional import (
    EnergyBreakdown, Objective, States, driving_term, gradient_action, jnd_constant, kv_value, mm_value,
)
from kvcavity.mesh import Mesh, generate_square_mesh, inner_band
from kvcavity.synthdata import self_consistent_measurements

MAT = IsotropicMaterial(0.5, 1.0)
EPS = 1.0 / (16.0 * math.pi)
LOADS = [get_load("g1"), get_load("g2")]


def random_objective(mesh, seed=0, delta=1e-2, gamma=0.1, scale=0.1):
    rng = np.random.default_rng(seed)
    traces = [scale * rng.normal(size=(mesh.n_vertices, 2)) for _ in LOADS]
    return Objective(mesh, MAT, [g.nodal(mesh) for g in LOADS], traces, delta, gamma, EPS)


def admissible(mesh, rng, lo=0.0, hi=1.0):
    v = rng.uniform(lo, hi, size=mesh.n_vertices)
    v[inner_band(mesh, 0.1)] = 0.0
    return v


class TestEnergyBreakdown:
    def test_total_is_sum(self):
        e = EnergyBreakdown(1.0, 2.0, -2.5, 0.25, 0.125)
        assert e.total == pytest.approx(0.875, abs=1e-12)
        assert e.kv == pytest.approx(0.5, abs=1e-12)

    def test_terms_non_negative(self):
        mesh = generate_square_mesh(10)
        obj = random_objective(mesh)
        e = obj.energy(admissible(mesh, np.random.default_rng(1)))
        assert min(e.jn, e.jd, e.mm_grad, e.mm_pot) >= 0.0


class TestKV:
    def test_equal_states_zero(self):
        mesh = generate_square_mesh(4)
        u = np.random.default_rng(0).normal(size=(mesh.n_vertices, 2))
        assert kv_value(mesh, u, u, np.ones(mesh.n_triangles), MAT) == 0.0

    def test_inverse_crime_zero(self):
        mesh = generate_square_mesh(16)
        rng = np.random.default_rng(3)
        v = admissible(mesh, rng)
        meas = self_consistent_measurements(mesh, MAT, LOADS, v, 1e-2)
        obj = Objective(mesh, MAT, [g.nodal(mesh) for g in LOADS], [m.f for m in meas], 1e-2, 0.1, EPS)
        st = obj.states(v)
        kv = sum(kv_value(mesh, a, b, st.factors, MAT) for a, b in zip(st.neumann, st.dirichlet))
        assert kv <= 1e-9
        assert abs(obj.energy(v, st).kv) <= 1e-9

    @pytest.mark.parametrize("seed", range(3))
    def test_decomposition(self, seed):
        mesh = generate_square_mesh(12)
        obj = random_objective(mesh, seed)
        v = admissible(mesh, np.random.default_rng(seed + 10))
        st = obj.states(v)
        kv = sum(kv_value(mesh, a, b, st.factors, MAT) for a, b in zip(st.neumann, st.dirichlet))
        e = obj.energy(v, st)
        assert abs(kv - (e.jn + e.jd + e.jnd)) <= 1e-8 * abs(kv)

    def test_work_identity(self):
        mesh = generate_square_mesh(12)
        obj = random_objective(mesh, 4)
        v = admissible(mesh, np.random.default_rng(5))
        st = obj.states(v)
        for g, u, en in zip(obj.loads, st.neumann, st.energies_n):
            work = load_vector(mesh, g) @ u.ravel()
            assert abs(np.dot(st.factors, en) - work) <= 1e-8 * abs(work)

    def test_zero_iff_states_agree(self):
        mesh = generate_square_mesh(6)
        rng = np.random.default_rng(0)
        u = rng.normal(size=(mesh.n_vertices, 2))
        # rigid motions carry no energy
        rigid = np.stack([0.3 - 0.2 * mesh.vertices[:, 1], -0.1 + 0.2 * mesh.vertices[:, 0]], axis=1)
        assert kv_value(mesh, u + rigid, u, np.ones(mesh.n_triangles), MAT) <= 1e-12
        assert kv_value(mesh, u + 1e-3 * rng.normal(size=u.shape), u, np.ones(mesh.n_triangles), MAT) > 0


class TestJND:
    def _all_neumann(self, n):
        sq = generate_square_mesh(n)
        return Mesh(sq.vertices, sq.triangles, sq.boundary_edges, np.zeros(len(sq.boundary_edges)))

    def test_zero_trace(self):
        mesh = generate_square_mesh(4)
        assert jnd_constant(mesh, get_load("g1").nodal(mesh), np.zeros((mesh.n_vertices, 2))) == 0.0

    def test_orthogonal_loads(self):
        mesh = self._all_neumann(8)
        x, y = mesh.vertices.T
        g = np.stack([x, y], axis=1)
        f = np.stack([-y, x], axis=1)
        assert abs(jnd_constant(mesh, g, f)) <= 1e-14

    def test_closed_form(self):
        mesh = self._all_neumann(8)
        x, y = mesh.vertices.T
        # -int (x, y).(x, y) over the square boundary = -4 * int_{-1}^{1} (1 + t^2) dt
        value = jnd_constant(mesh, np.stack([x, y], axis=1), np.stack([x, y], axis=1))
        assert value == pytest.approx(-32.0 / 3.0, abs=1e-12)

    def test_linear(self):
        mesh = generate_square_mesh(6)
        f = np.random.default_rng(0).normal(size=(mesh.n_vertices, 2))
        g = get_load("g2").nodal(mesh)
        assert jnd_constant(mesh, g, 2 * f) == pytest.approx(2 * jnd_constant(mesh, g, f), rel=1e-14)


class TestModicaMortola:
    @pytest.mark.parametrize("value", [0.0, 1.0])
    def test_pure_phases(self, value):
        mesh = generate_square_mesh(6)
        assert mm_value(mesh, np.full(mesh.n_vertices, value), 0.1, EPS) == (0.0, 0.0)

    def test_half(self):
        mesh = generate_square_mesh(6)
        grad, pot = mm_value(mesh, np.full(mesh.n_vertices, 0.5), 0.1, EPS)
        assert abs(grad) <= 1e-14
        assert pot == pytest.approx(0.1 / EPS, rel=1e-13)

    def test_affine_gradient(self):
        mesh = generate_square_mesh(5)
        v = 0.5 + 0.25 * mesh.vertices[:, 0]
        grad, pot = mm_value(mesh, v, 1.0, 1.0)
        assert grad == pytest.approx(4 * 0.0625, rel=1e-13)
        # int (1/2 + x/4)(1/2 - x/4) = int 1/4 - x^2/16 = 1 - 1/12
        assert pot == pytest.approx(1.0 - 1.0 / 12.0, rel=1e-13)


class TestDrivingTerm:
    def test_unit_contrast_vanishes(self):
        mesh = generate_square_mesh(8)
        obj = random_objective(mesh, delta=1.0)
        st = obj.states(admissible(mesh, np.random.default_rng(0)))
        np.testing.assert_array_equal(obj.drive(st), 0.0)
        np.testing.assert_array_equal(driving_term(mesh, st, 1.0, MAT), 0.0)

    def test_inverse_crime_vanishes(self):
        mesh = generate_square_mesh(12)
        v = admissible(mesh, np.random.default_rng(2))
        meas = self_consistent_measurements(mesh, MAT, LOADS[:1], v, 1e-2)
        obj = Objective(mesh, MAT, [LOADS[0].nodal(mesh)], [meas[0].f], 1e-2, 0.1, EPS)
        st = obj.states(v)
        scale = np.abs(driving_term(mesh, States(v, st.factors, st.neumann, [0 * st.neumann[0]]), 1e-2, MAT)).max()
        assert np.abs(obj.drive(st)).max() <= 1e-9 * scale

    def test_additive(self):
        mesh = generate_square_mesh(8)
        obj = random_objective(mesh, 1)
        st = obj.states(admissible(mesh, np.random.default_rng(3)))
        both = driving_term(mesh, st, obj.delta, MAT)
        parts = [driving_term(mesh, States(st.v, st.factors, [a], [b]), obj.delta, MAT)
                 for a, b in zip(st.neumann, st.dirichlet)]
        np.testing.assert_allclose(both, parts[0] + parts[1], rtol=1e-14, atol=1e-300)
        np.testing.assert_allclose(obj.drive(st), both, rtol=1e-12, atol=1e-15 * np.abs(both).max())

    def test_sign_structure(self):
        mesh = generate_square_mesh(8)
        obj = random_objective(mesh, 2)
        st = obj.states(admissible(mesh, np.random.default_rng(4)))
        zero = [np.zeros_like(u) for u in st.neumann]
        d_n = driving_term(mesh, States(st.v, st.factors, st.neumann, zero), obj.delta, MAT)
        d_d = driving_term(mesh, States(st.v, st.factors, zero, st.dirichlet), obj.delta, MAT)
        assert np.all(d_n >= 0) and np.any(d_n > 0)
        assert np.all(d_d <= 0) and np.any(d_d < 0)

    def test_star_support(self):
        # vertex not touched by any triangle receives nothing
        sq = generate_square_mesh(2)
        verts = np.vstack([sq.vertices, [[0.25, 0.25]]])
        mesh = Mesh(verts, sq.triangles, sq.boundary_edges, sq.boundary_labels)
        u = [np.random.default_rng(0).normal(size=(mesh.n_vertices, 2))]
        d = driving_term(mesh, States(np.zeros(10), np.ones(8), u, [np.zeros_like(u[0])]), 1e-2, MAT)
        assert d[-1] == 0.0


class TestGradient:
    def test_zero_direction(self):
        mesh = generate_square_mesh(6)
        obj = random_objective(mesh)
        assert gradient_action(obj, admissible(mesh, np.random.default_rng(0)), np.zeros(mesh.n_vertices)) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        mesh = generate_square_mesh(12)
        rng = np.random.default_rng(seed)
        obj = random_objective(mesh, seed, delta=1e-2, gamma=0.1)
        v = admissible(mesh, rng, 0.2, 0.8)
        theta = rng.normal(size=mesh.n_vertices)
        theta[inner_band(mesh, 0.1)] = 0.0
        t = 1e-4
        fd = (obj.energy(v + t * theta).total - obj.energy(v - t * theta).total) / (2 * t)
        assert abs(fd - gradient_action(obj, v, theta)) <= 1e-4 * abs(fd)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_linear_in_direction(self, seed):
        mesh = generate_square_mesh(6)
        rng = np.random.default_rng(seed)
        obj = random_objective(mesh, 0)
        v = admissible(mesh, rng)
        st = obj.states(v)
        a, b = rng.normal(size=(2, mesh.n_vertices))
        lhs = obj.gradient_action(v, a + b, st)
        rhs = obj.gradient_action(v, a, st) + obj.gradient_action(v, b, st)
        scale = abs(obj.gradient(v, st)) @ (abs(a) + abs(b))
        assert abs(lhs - rhs) <= 1e-12 * scale
