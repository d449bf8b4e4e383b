"""Synthetic measurements, trace norms and calibrated noise."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvcavity.fem import IsotropicMaterial, get_load
from kvcavity.mesh import Label, ShapeSpec, arclength, generate_hole_mesh, generate_square_mesh, refine
from kvcavity.synthdata import (
    BoundaryData, Measurement, NoiseSpec, apply_noise, calibrate_noise, coarse_resolution, forward_trace,
    generate_measurements, l2_trace_norm, noise_level, self_consistent_measurements, worker_count,
)

MAT = IsotropicMaterial(0.5, 1.0)
DISK = ShapeSpec.disk((0.0, 0.0), 0.3)
LOADS = [get_load("g1"), get_load("g2")]


@pytest.fixture(scope="module")
def coarse():
    return generate_square_mesh(16)


@pytest.fixture(scope="module")
def clean(coarse):
    return generate_measurements([DISK], MAT, LOADS, 64, coarse)


def dense_trace_norm(mesh, f, k=40):
    # composite midpoint rule on each Sigma_N edge; its O(1/k^2) error is removed by Richardson below
    total = 0.0
    t = (np.arange(k) + 0.5) / k
    for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels):
        if lab != Label.SIGMA_N:
            continue
        L = np.linalg.norm(mesh.vertices[b] - mesh.vertices[a])
        vals = np.outer(1 - t, f[a]) + np.outer(t, f[b])
        total += L * np.sum(vals ** 2) / k
    return total


class TestTraceNorm:
    def test_zero(self, coarse):
        assert l2_trace_norm(coarse, np.zeros((coarse.n_vertices, 2))) == 0.0

    def test_constant(self, coarse):
        f = np.tile([1.0, 0.0], (coarse.n_vertices, 1))
        assert l2_trace_norm(coarse, f) == pytest.approx(np.sqrt(6.0), abs=1e-13)

    def test_dense_quadrature_oracle(self, coarse):
        f = np.random.default_rng(0).normal(size=(coarse.n_vertices, 2))
        fine, half = dense_trace_norm(coarse, f, 400), dense_trace_norm(coarse, f, 200)
        oracle = np.sqrt((4 * fine - half) / 3)
        assert l2_trace_norm(coarse, f) == pytest.approx(oracle, rel=1e-10)


class TestGenerate:
    def test_zero_noise_exact(self, clean):
        for m in clean:
            np.testing.assert_array_equal(m.f, m.clean)
            assert m.noise_level_reported == 0.0
            assert m.noise_samples is None

    def test_traces_nonzero_on_sigma_n(self, coarse, clean):
        ids = coarse.neumann_vertices
        for m in clean:
            assert np.all(np.linalg.norm(m.f[ids], axis=1) > 0)
            np.testing.assert_array_equal(m.f[coarse.dirichlet_vertices], 0.0)
        assert [m.load.name for m in clean] == ["g1", "g2"]

    def test_trace_matches_fine_solve(self, coarse, clean):
        fine = generate_hole_mesh(64, [DISK])
        data = forward_trace(fine, MAT, LOADS[0])
        ids = coarse.neumann_vertices
        np.testing.assert_allclose(clean[0].f[ids], data.at(arclength(coarse.vertices[ids])), atol=1e-15)

    def test_inverse_crime_guard(self, coarse):
        with pytest.raises(ValueError, match="finer"):
            generate_measurements([DISK], MAT, LOADS, 16, coarse)
        assert coarse_resolution(coarse) == 16

    def test_return_fine(self, coarse):
        out, fine, states = generate_measurements([DISK], MAT, LOADS[:1], 32, coarse, return_fine=True)
        assert fine is not coarse and fine.n_vertices != coarse.n_vertices
        assert states[0].shape == (fine.n_vertices, 2)
        assert np.any(np.asarray(fine.boundary_labels) == Label.CAVITY)

    def test_trace_on_refined_mesh(self, coarse, clean):
        fine, p = refine(coarse, np.arange(coarse.n_triangles))
        f = clean[0].trace_on(fine)
        old = coarse.neumann_vertices
        np.testing.assert_allclose(f[old], clean[0].f[old], atol=1e-15)

    def test_worker_count(self, monkeypatch):
        monkeypatch.setenv("KV_THREADS", "1")
        assert worker_count(4) == 1
        monkeypatch.setenv("KV_THREADS", "8")
        assert worker_count(2) == 2


class TestNoise:
    def test_deterministic(self, coarse, clean):
        a = apply_noise(coarse, clean, NoiseSpec(0.01, 5))
        b = apply_noise(coarse, clean, NoiseSpec(0.01, 5))
        c = apply_noise(coarse, clean, NoiseSpec(0.01, 6))
        for x, y, z in zip(a, b, c):
            np.testing.assert_array_equal(x.f, y.f)
            assert not np.array_equal(x.f, z.f)

    def test_uniform_bounds(self, coarse, clean):
        amp = 0.02
        noisy = apply_noise(coarse, clean, NoiseSpec(amp, 1))
        for m in noisy:
            eta = (m.f - m.clean) / l2_trace_norm(coarse, m.clean)
            assert np.abs(eta).max() <= amp
            np.testing.assert_array_equal(eta[coarse.dirichlet_vertices], 0.0)

    def test_reported_level_formula(self, coarse, clean):
        noisy = apply_noise(coarse, clean, NoiseSpec(0.03, 2))
        num = sum(l2_trace_norm(coarse, m.f - m.clean) ** 2 for m in noisy)
        den = sum(l2_trace_norm(coarse, m.clean) ** 2 for m in noisy)
        assert noisy[0].noise_level_reported == pytest.approx(np.sqrt(num / den), rel=1e-14)

    def test_noisy_samples_reproduce_nodes(self, coarse, clean):
        noisy = apply_noise(coarse, clean, NoiseSpec(0.03, 2))
        for m in noisy:
            np.testing.assert_allclose(m.trace_on(coarse), m.f, atol=1e-14)

    @pytest.mark.parametrize("target", [0.02, 0.05])
    def test_calibration(self, coarse, clean, target):
        spec = calibrate_noise(target, coarse, clean, seed=0)
        level = apply_noise(coarse, clean, spec)[0].noise_level_reported
        assert abs(level - target) <= 0.002

    def test_calibration_zero(self, coarse, clean):
        assert calibrate_noise(0.0, coarse, clean, seed=3) == NoiseSpec(0.0, 3)

    def test_calibration_monotone(self, coarse, clean):
        amps = [calibrate_noise(t, coarse, clean, seed=0).amplitude for t in (0.01, 0.02, 0.04, 0.065)]
        assert all(a < b for a, b in zip(amps, amps[1:]))

    def test_generate_with_float_target(self, coarse):
        meas = generate_measurements([DISK], MAT, LOADS, 32, coarse, noise=0.05, seed=4)
        assert abs(meas[0].noise_level_reported - 0.05) <= 0.002
        assert meas[0].noise.seed == 4

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.1, 100.0), st.integers(0, 1000))
    def test_level_homogeneous(self, scale, seed):
        mesh = generate_square_mesh(8)
        rng = np.random.default_rng(seed)
        f = [rng.normal(size=(mesh.n_vertices, 2)) for _ in range(2)]
        g = [x + 0.1 * rng.normal(size=x.shape) for x in f]
        a = noise_level(mesh, f, g)
        b = noise_level(mesh, [scale * x for x in f], [scale * x for x in g])
        assert b == pytest.approx(a, rel=1e-12)

    def test_negative_amplitude(self):
        with pytest.raises(ValueError):
            NoiseSpec(-0.1)


class TestBoundaryData:
    def test_periodic_interpolation(self):
        data = BoundaryData([7.0, 1.0, 3.0], [[3, 0], [1, 0], [2, 0]])
        np.testing.assert_allclose(data.s, [1.0, 3.0, 7.0])
        # wrap from s = 7 to s = 9 (= 1)
        np.testing.assert_allclose(data.at([0.0, 2.0])[:, 0], [2.0, 1.5])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            BoundaryData([], np.zeros((0, 2)))

    def test_self_consistent(self):
        mesh = generate_square_mesh(8)
        meas = self_consistent_measurements(mesh, MAT, LOADS[:1], np.zeros(mesh.n_vertices), 1e-2)
        assert isinstance(meas[0], Measurement) and meas[0].data is None
        np.testing.assert_array_equal(meas[0].trace_on(mesh), meas[0].f)
