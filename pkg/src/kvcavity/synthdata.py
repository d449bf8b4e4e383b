"""Synthetic boundary measurements from a fine hole mesh, with uniform noise.

The forward problem is solved on a hole mesh finer than the inversion mesh,
so data and inversion never share a discretisation.  The displacement on
the outer boundary is stored as a function of arc length and interpolated
onto whatever inversion mesh is current.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .fem import BoundaryLoad, IsotropicMaterial, edge_mass_pairing, element_factors, operator_for
from .fem import solve_cavity_forward
from .mesh import PERIMETER, Label, Mesh, ShapeSpec, arclength, boundary_trace, generate_hole_mesh

def worker_count(n_tasks: int) -> int:
    """Thread count for independent forward solves, capped by ``KV_THREADS``."""
    raw = os.environ.get("KV_THREADS", "")
    try:
        cap = int(raw) if raw else os.cpu_count() or 1
    except ValueError:
        cap = 1
    return max(1, min(cap, n_tasks))


@dataclass(frozen=True)
class NoiseSpec:
    amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.amplitude >= 0.0:
            raise ValueError("noise amplitude must be non-negative")

    def rng(self, index: int) -> np.random.Generator:
        # independent stream per measurement index
        return np.random.default_rng([int(self.seed), int(index)])


@dataclass
class BoundaryData:
    """Displacement samples on the outer boundary, periodic in arc length."""

    s: np.ndarray
    values: np.ndarray
    on_dirichlet: np.ndarray | None = None

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.values = np.asarray(self.values, dtype=float).reshape(-1, 2)
        if len(self.s) == 0:
            raise ValueError("empty boundary trace")
        if len(self.values) != len(self.s):
            raise ValueError("one value pair per sample required")
        if self.on_dirichlet is None:
            self.on_dirichlet = np.zeros(len(self.s), dtype=bool)
        self.on_dirichlet = np.asarray(self.on_dirichlet, dtype=bool)
        order = np.argsort(self.s, kind="stable")
        self.s, self.values, self.on_dirichlet = self.s[order], self.values[order], self.on_dirichlet[order]

    def at(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack([np.interp(s, self.s, self.values[:, k], period=PERIMETER)
                         for k in range(2)], axis=-1)

    def on(self, mesh: Mesh) -> np.ndarray:
        """Nodal (nv, 2) trace: interpolated on Sigma_N vertices, zero elsewhere."""
        f = np.zeros((mesh.n_vertices, 2))
        ids = mesh.neumann_vertices
        f[ids] = self.at(arclength(mesh.vertices[ids]))
        return f


@dataclass
class Measurement:
    """One load/trace pair on the current inversion mesh.

    ``data`` keeps the clean fine-mesh trace and ``noise_samples`` the noise
    at the same arc-length samples, so the trace can be re-interpolated after
    refinement.
    """

    load: BoundaryLoad
    f: np.ndarray
    noise_level_reported: float = 0.0
    data: BoundaryData | None = None
    clean: np.ndarray | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    noise_samples: np.ndarray | None = None

    @property
    def noisy_data(self) -> BoundaryData | None:
        """Fine trace plus the noise, linear in arc length between inversion nodes."""
        if self.data is None or self.noise_samples is None:
            return self.data
        return BoundaryData(self.data.s, self.data.values + self.noise_samples, self.data.on_dirichlet)

    def trace_on(self, mesh: Mesh) -> np.ndarray:
        data = self.noisy_data
        if data is None:
            if len(self.f) != mesh.n_vertices:
                raise ValueError("measurement has no stored trace to transfer")
            return self.f
        return data.on(mesh)


def l2_trace_norm(mesh: Mesh, f: np.ndarray, label: Label = Label.SIGMA_N) -> float:
    """L2 norm of the P1 trace on edges with ``label`` (exact for piecewise quadratics)."""
    f = np.asarray(f, dtype=float).reshape(mesh.n_vertices, 2)
    return float(np.sqrt(max(edge_mass_pairing(mesh, f, f, label), 0.0)))


def noise_level(mesh: Mesh, clean: Sequence[np.ndarray], noisy: Sequence[np.ndarray]) -> float:
    """sqrt(sum ||f_noise - f||^2) / sqrt(sum ||f||^2) over Sigma_N."""
    num = sum(l2_trace_norm(mesh, np.asarray(b) - np.asarray(a)) ** 2 for a, b in zip(clean, noisy))
    den = sum(l2_trace_norm(mesh, a) ** 2 for a in clean)
    return float(np.sqrt(num / den)) if den > 0 else 0.0


def noise_perturbation(mesh: Mesh, f: np.ndarray, noise: NoiseSpec, index: int) -> np.ndarray:
    """eta * ||f|| on every Sigma_N dof with eta ~ U(-a, a) i.i.d."""
    eta = np.zeros((mesh.n_vertices, 2))
    if noise.amplitude == 0.0:
        return eta
    ids = mesh.neumann_vertices
    draw = noise.rng(index).uniform(-noise.amplitude, noise.amplitude, size=(len(ids), 2))
    eta[ids] = draw * l2_trace_norm(mesh, f)
    return eta


def apply_noise(mesh: Mesh, measurements: Sequence[Measurement], noise: NoiseSpec) -> list[Measurement]:
    """Re-perturb the clean traces with ``noise`` and update the reported level."""
    out = []
    for i, m in enumerate(measurements):
        clean = m.f if m.clean is None else m.clean
        eta = noise_perturbation(mesh, clean, noise, i)
        samples = None
        if m.data is not None and noise.amplitude > 0.0:
            ids = mesh.neumann_vertices
            samples = _noise_function(arclength(mesh.vertices[ids]), eta[ids], m.data.s)
        out.append(replace(m, f=clean + eta, clean=clean, noise=noise, noise_samples=samples))
    level = noise_level(mesh, [m.clean for m in out], [m.f for m in out])
    for m in out:
        m.noise_level_reported = level
    return out


def _noise_function(s_nodes, eta, s_fine):
    # piecewise linear through the nodal noise
    return BoundaryData(s_nodes, eta).at(s_fine) if len(s_nodes) else np.zeros((len(s_fine), 2))


def calibrate_noise(target_level: float, mesh: Mesh, measurements: Sequence[Measurement], seed: int = 0,
                    tol: float = 1e-4, max_iter: int = 200) -> NoiseSpec:
    """Bisection on the amplitude until the reported level is within ``tol`` of the target."""
    if target_level < 0:
        raise ValueError("target level must be non-negative")
    if target_level == 0:
        return NoiseSpec(0.0, seed)

    def level(a):
        return apply_noise(mesh, measurements, NoiseSpec(a, seed))[0].noise_level_reported

    lo, hi = 0.0, 1.0
    while level(hi) < target_level:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("noise target unreachable")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        lev = level(mid)
        if abs(lev - target_level) <= tol:
            return NoiseSpec(mid, seed)
        lo, hi = (mid, hi) if lev < target_level else (lo, mid)
    return NoiseSpec(0.5 * (lo + hi), seed)


def coarse_resolution(mesh: Mesh) -> int:
    """Cells per side implied by the longest outer boundary edge."""
    e = mesh.boundary_edges[mesh.boundary_labels != int(Label.CAVITY)]
    length = np.linalg.norm(mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]], axis=1)
    return int(round(2.0 / float(length.max())))


def forward_trace(fine: Mesh, material: IsotropicMaterial, load: BoundaryLoad) -> BoundaryData:
    return _forward(fine, material, load)[0]


def _forward(fine, material, load):
    u = solve_cavity_forward(fine, material, load.nodal(fine))
    s, ids, values = boundary_trace(fine, u, (Label.SIGMA_N, Label.SIGMA_D))
    if not np.any(values):
        raise ValueError(f"forward trace for load {load.name!r} vanishes identically")
    return BoundaryData(s, values, np.isin(ids, fine.dirichlet_vertices)), u


def generate_measurements(shapes: Sequence[ShapeSpec], material: IsotropicMaterial,
                          loads: Sequence[BoundaryLoad], fine_n: int, coarse_mesh: Mesh,
                          noise: NoiseSpec | float = NoiseSpec(), d0: float = 0.1,
                          seed: int = 0, return_fine: bool = False):
    """Measurements for each load, computed on an ``fine_n`` hole mesh.

    With ``return_fine`` the hole mesh and its displacement fields are
    returned as well.

    ``noise`` may also be a float target level, in which case the amplitude
    is calibrated first with RNG seed ``seed``.
    """
    if fine_n <= coarse_resolution(coarse_mesh):
        raise ValueError("the forward mesh must be finer than the inversion mesh")
    fine = generate_hole_mesh(fine_n, shapes, coarse_mesh.dirichlet_sides(), d0=d0)
    if fine is coarse_mesh:
        raise ValueError("forward and inversion mesh coincide")
    loads = list(loads)
    with ThreadPoolExecutor(max_workers=worker_count(len(loads))) as pool:
        solved = list(pool.map(lambda g: _forward(fine, material, g), loads))
    traces = [t for t, _ in solved]
    clean = []
    for g, data in zip(loads, traces):
        f = data.on(coarse_mesh)
        clean.append(Measurement(g, f, 0.0, data, f.copy()))
    if not isinstance(noise, NoiseSpec):
        noise = calibrate_noise(float(noise), coarse_mesh, clean, seed=seed)
    out = apply_noise(coarse_mesh, clean, noise)
    return (out, fine, [u for _, u in solved]) if return_fine else out


def self_consistent_measurements(mesh: Mesh, material: IsotropicMaterial, loads: Sequence[BoundaryLoad],
                                 v: np.ndarray, delta: float) -> list[Measurement]:
    """Data from the ersatz Neumann solve on ``mesh`` itself (inverse crime, test use only)."""
    op = operator_for(mesh, material)
    loads = list(loads)
    states = op.solve_neumann(element_factors(mesh, v, delta), [g.nodal(mesh) for g in loads])
    out = []
    for g, u in zip(loads, states):
        f = np.zeros((mesh.n_vertices, 2))
        ids = mesh.neumann_vertices
        f[ids] = u[ids]
        out.append(Measurement(g, f, 0.0, None, f.copy()))
    return out
