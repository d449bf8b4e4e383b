"""Energy terms of the relaxed Kohn-Vogelius objective and its derivative.

For one measurement (g, f) the misfit splits as ``J_KV = J_N + J_D + J_ND``
with ``J_N = 1/2 a_v(u_N, u_N)``, ``J_D = 1/2 a_v(u_D, u_D)`` and the
state-independent ``J_ND = -int_{Sigma_N} g f``.  The Modica-Mortola term
``gamma * int(eps |grad v|^2 + v (1 - v) / eps)`` regularises the phase.
The objective takes ``gamma`` directly (``gamma = 4 alpha / pi`` for a
perimeter weight ``alpha``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import (
    IsotropicMaterial, edge_mass_pairing, element_factors, laplacian_matrix, mass_matrix,
    operator_for,
)
from .mesh import Label, Mesh


@dataclass(frozen=True)
class EnergyBreakdown:
    jn: float
    jd: float
    jnd: float
    mm_grad: float
    mm_pot: float

    @property
    def total(self) -> float:
        return self.jn + self.jd + self.jnd + self.mm_grad + self.mm_pot

    @property
    def kv(self) -> float:
        return self.jn + self.jd + self.jnd


@dataclass
class States:
    """Neumann and Dirichlet states for every measurement at one phase field."""

    v: np.ndarray
    factors: np.ndarray
    neumann: list
    dirichlet: list
    energies_n: list = field(default_factory=list)
    energies_d: list = field(default_factory=list)


def kv_value(mesh: Mesh, u_n: np.ndarray, u_d: np.ndarray, factors: np.ndarray,
             material: IsotropicMaterial) -> float:
    """1/2 int C(v) e(u_N - u_D) : e(u_N - u_D)."""
    op = operator_for(mesh, material)
    diff = np.asarray(u_n, dtype=float) - np.asarray(u_d, dtype=float)
    return 0.5 * float(np.dot(factors, op.element_energies(diff)))


def state_energy(mesh: Mesh, u: np.ndarray, factors: np.ndarray, material: IsotropicMaterial) -> float:
    """1/2 int C(v) e(u) : e(u)."""
    return 0.5 * float(np.dot(factors, operator_for(mesh, material).element_energies(u)))


def jnd_constant(mesh: Mesh, g: np.ndarray, f: np.ndarray) -> float:
    """-int_{Sigma_N} g_h . f_h with f zeroed on Sigma_D vertices."""
    f = np.array(f, dtype=float).reshape(mesh.n_vertices, 2)
    f[mesh.dirichlet_vertices] = 0.0
    return -edge_mass_pairing(mesh, g, f, Label.SIGMA_N)


def mm_value(mesh: Mesh, v: np.ndarray, gamma: float, epsilon: float) -> tuple[float, float]:
    """(gradient part, potential part) of the Modica-Mortola functional.

    The potential v(1 - v) is quadratic on each triangle, so the edge-midpoint
    rule integrates it exactly.
    """
    v = np.asarray(v, dtype=float)
    t = mesh.triangles
    g = np.einsum("tkd,tk->td", mesh.gradients, v[t])
    grad = gamma * epsilon * float(np.dot(mesh.areas, (g * g).sum(axis=1)))
    mids = 0.5 * (v[t[:, [1, 2, 0]]] + v[t[:, [2, 0, 1]]])
    pot = (gamma / epsilon) * float(np.dot(mesh.areas, (mids * (1.0 - mids)).sum(axis=1)) / 3.0)
    return grad, pot


def driving_term(mesh: Mesh, states: States, delta: float, material: IsotropicMaterial) -> np.ndarray:
    """Nodal drive d_i = 1/2 int phi_i (C1 - C0)[e(u_D):e(u_D) - e(u_N):e(u_N)], summed over measurements."""
    op = operator_for(mesh, material)
    per_tri = np.zeros(mesh.n_triangles)
    for u_n, u_d in zip(states.neumann, states.dirichlet):
        per_tri += op.element_energies(u_d) - op.element_energies(u_n)
    return _scatter_drive(mesh, per_tri, delta)


def _scatter_drive(mesh: Mesh, per_tri: np.ndarray, delta: float) -> np.ndarray:
    # per_tri holds |T| (C0 e_D:e_D - C0 e_N:e_N); each vertex gets a third
    contrib = 0.5 * (delta - 1.0) * per_tri / 3.0
    d = np.zeros(mesh.n_vertices)
    np.add.at(d, mesh.triangles, np.repeat(contrib[:, None], 3, axis=1))
    return d


class Objective:
    """J(v) = sum_i J_KV,i(v) + Modica-Mortola(v) on a fixed mesh.

    ``loads`` and ``traces`` are nodal (nv, 2) arrays, one pair per
    measurement.
    """

    def __init__(self, mesh: Mesh, material: IsotropicMaterial, loads, traces,
                 delta: float, gamma: float, epsilon: float):
        self.mesh = mesh
        self.material = material
        self.loads = [np.asarray(g, dtype=float) for g in loads]
        self.traces = [np.asarray(f, dtype=float) for f in traces]
        if len(self.loads) != len(self.traces):
            raise ValueError("need one trace per load")
        self.delta = delta
        self.gamma = gamma
        self.epsilon = epsilon
        self.op = operator_for(mesh, material)
        self.jnd = sum(jnd_constant(mesh, g, f) for g, f in zip(self.loads, self.traces))

    def states(self, v: np.ndarray) -> States:
        s = element_factors(self.mesh, v, self.delta)
        un = self.op.solve_neumann(s, self.loads)
        ud = self.op.solve_dirichlet(s, self.traces)
        st = States(np.array(v, dtype=float), s, un, ud)
        st.energies_n = [self.op.element_energies(u) for u in un]
        st.energies_d = [self.op.element_energies(u) for u in ud]
        return st

    def energy(self, v: np.ndarray, states: States | None = None) -> EnergyBreakdown:
        st = self.states(v) if states is None else states
        jn = 0.5 * sum(float(np.dot(st.factors, e)) for e in st.energies_n)
        jd = 0.5 * sum(float(np.dot(st.factors, e)) for e in st.energies_d)
        grad, pot = mm_value(self.mesh, v, self.gamma, self.epsilon)
        return EnergyBreakdown(jn, jd, self.jnd, grad, pot)

    def drive(self, states: States) -> np.ndarray:
        per_tri = np.zeros(self.mesh.n_triangles)
        for en, ed in zip(states.energies_n, states.energies_d):
            per_tri += ed - en
        return _scatter_drive(self.mesh, per_tri, self.delta)

    def gradient(self, v: np.ndarray, states: States | None = None) -> np.ndarray:
        """Nodal representation of J'(v): J'(v)[theta] = gradient . theta."""
        st = self.states(v) if states is None else states
        v = np.asarray(v, dtype=float)
        M = mass_matrix(self.mesh)
        K = laplacian_matrix(self.mesh)
        return (self.drive(st) + 2.0 * self.gamma * self.epsilon * (K @ v)
                + (self.gamma / self.epsilon) * (M @ (1.0 - 2.0 * v)))

    def gradient_action(self, v: np.ndarray, theta: np.ndarray, states: States | None = None) -> float:
        return float(np.dot(self.gradient(v, states), theta))


def gradient_action(objective: Objective, v: np.ndarray, theta: np.ndarray) -> float:
    """Directional derivative J'(v)[theta] including the state sensitivity."""
    return objective.gradient_action(v, theta)
