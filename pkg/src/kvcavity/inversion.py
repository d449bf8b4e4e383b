"""Semi-implicit gradient flow for the phase field with adaptive refinement.

Each iteration solves the Neumann and Dirichlet states at v^n, forms the
obstacle QP for v^{n+1}, solves it by PDAS and accepts the step only if the
total energy does not increase.  Rejected steps halve the time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fem import IsotropicMaterial, laplacian_matrix, mass_matrix
from .functional import EnergyBreakdown, Objective, States
from .mesh import Mesh, ShapeSpec, element_gradient_norms, inner_band, mark_by_gradient, refine
from .pdas import ObstacleQP, pdas_solve
from .synthdata import Measurement

DESCENT_SLACK = 1e-12
HISTORY_COLUMNS = ("n", "tau", "step_norm", "jn", "jd", "jnd", "mm_grad", "mm_pot", "total",
                   "accepted", "rejected", "n_triangles")


class InversionError(RuntimeError):
    pass


@dataclass
class InversionConfig:
    gamma: float = 0.05
    epsilon: float = 1.0 / (16.0 * math.pi)
    delta: float = 1e-2
    tau_init: float = 1e-3
    tau_max: float = 1e-2
    tau_growth: float = 1.2
    tol: float = 1e-5
    tol_ref: float = 7e-5
    n_ref: int = 2000
    d0: float = 0.1
    max_iterations: int = 20000
    max_rejections: int = 20
    refine_fraction: float = 0.15
    refine: bool = True
    material: IsotropicMaterial = field(default_factory=lambda: IsotropicMaterial(0.5, 1.0))
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if isinstance(self.material, (tuple, list)):
            self.material = IsotropicMaterial(*self.material)
        checks = [
            # tol = inf is allowed and means a single step
            (self.tol < self.tol_ref or math.isinf(self.tol), "tol must be smaller than tol_ref"),
            (self.tol > 0.0, "tol must be positive"),
            (0.0 < self.tau_init < 1.0, "tau_init must lie in (0, 1)"),
            (0.0 < self.tau_max, "tau_max must be positive"),
            (self.epsilon > 0.0, "epsilon must be positive"),
            (0.0 < self.delta < 1.0, "delta must lie in (0, 1)"),
            (self.gamma > 0.0, "gamma must be positive"),
            (0.0 < self.d0 < 1.0, "d0 must lie in (0, 1)"),
            (self.n_ref >= 1, "n_ref must be at least 1"),
            (self.max_iterations >= 1, "max_iterations must be at least 1"),
            (0.0 < self.refine_fraction <= 1.0, "refine_fraction must lie in (0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)


@dataclass
class HistoryRow:
    n: int
    tau: float
    step_norm: float
    jn: float
    jd: float
    jnd: float
    mm_grad: float
    mm_pot: float
    total: float
    accepted: int
    rejected: int
    n_triangles: int

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in HISTORY_COLUMNS)


class Problem:
    """Mesh-dependent pieces of the flow: objective, band, mass and stiffness."""

    def __init__(self, mesh: Mesh, config: InversionConfig, measurements: Sequence[Measurement]):
        self.mesh = mesh
        loads = [m.load.nodal(mesh) for m in measurements]
        traces = [m.trace_on(mesh) for m in measurements]
        self.objective = Objective(mesh, config.material, loads, traces,
                                   config.delta, config.gamma, config.epsilon)
        self.band = inner_band(mesh, config.d0)
        self.M = mass_matrix(mesh)
        self.K = laplacian_matrix(mesh)

    def qp(self, v: np.ndarray, drive: np.ndarray, tau: float, gamma: float, epsilon: float) -> ObstacleQP:
        A = self.M / tau + (2.0 * gamma * epsilon) * self.K
        b = self.M @ (v / tau - (gamma / epsilon) * (1.0 - 2.0 * v)) - drive
        return ObstacleQP(A, b, self.band)


@dataclass
class InversionState:
    mesh: Mesh
    v: np.ndarray
    tau: float
    n: int = 0
    step_norm: float = math.inf
    accepted: int = 0
    rejected: int = 0
    consecutive_rejections: int = 0
    energy: EnergyBreakdown | None = None
    history: list = field(default_factory=list)
    converged: bool = False
    problem: Problem | None = field(default=None, repr=False)
    states: States | None = field(default=None, repr=False)
    pdas_iterations: list = field(default_factory=list, repr=False)


def step_norm(v_new: np.ndarray, v_old: np.ndarray) -> float:
    """Nodal max-norm of the update."""
    d = np.asarray(v_new, dtype=float) - np.asarray(v_old, dtype=float)
    return float(np.max(np.abs(d), initial=0.0))


def initial_state(mesh: Mesh, config: InversionConfig, measurements: Sequence[Measurement],
                  v0: np.ndarray | None = None) -> InversionState:
    v = np.zeros(mesh.n_vertices) if v0 is None else np.array(v0, dtype=float)
    if v.shape != (mesh.n_vertices,):
        raise ValueError("initial phase field does not match the mesh")
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError("initial phase field leaves [0, 1]")
    state = InversionState(mesh, v, config.tau_init)
    attach(state, config, measurements)
    if np.any(state.v[state.problem.band] != 0.0):
        raise ValueError("initial phase field must vanish on the inner band")
    return state


def attach(state: InversionState, config: InversionConfig, measurements: Sequence[Measurement]) -> None:
    """(Re)build the mesh-dependent problem and the states at the current v."""
    state.problem = Problem(state.mesh, config, measurements)
    state.states = state.problem.objective.states(state.v)
    state.energy = state.problem.objective.energy(state.v, state.states)


def step(state: InversionState, config: InversionConfig,
         measurements: Sequence[Measurement] | None = None) -> tuple[InversionState, bool]:
    """One attempt of the semi-implicit step; the state is updated in place.

    On success ``n`` advances, a history row is appended and the time step
    grows.  On an energy increase the step is discarded and the time step is
    halved.
    """
    if state.problem is None:
        if measurements is None:
            raise ValueError("measurements are required to attach a fresh state")
        attach(state, config, measurements)
    prob = state.problem
    obj = prob.objective
    tau = state.tau
    drive = obj.drive(state.states)
    qp = prob.qp(state.v, drive, tau, config.gamma, config.epsilon)
    v_new, _, outer = pdas_solve(qp, v_init=state.v)
    st_new = obj.states(v_new)
    e_new = obj.energy(v_new, st_new)
    if e_new.total <= state.energy.total + DESCENT_SLACK:
        dv = step_norm(v_new, state.v)
        state.v, state.states, state.energy = v_new, st_new, e_new
        state.n += 1
        state.step_norm = dv
        state.accepted += 1
        state.history.append(HistoryRow(state.n, tau, dv, e_new.jn, e_new.jd, e_new.jnd,
                                        e_new.mm_grad, e_new.mm_pot, e_new.total, 1,
                                        state.consecutive_rejections, state.mesh.n_triangles))
        state.consecutive_rejections = 0
        state.tau = min(tau * config.tau_growth, config.tau_max)
        state.pdas_iterations.append(outer)
        return state, True
    state.rejected += 1
    state.consecutive_rejections += 1
    state.tau = tau / 2.0
    return state, False


def maybe_refine(state: InversionState, config: InversionConfig,
                 measurements: Sequence[Measurement]) -> bool:
    """Refine where |grad v| is largest once the flow has slowed down."""
    if not config.refine or state.n % config.n_ref != 0 or state.step_norm > config.tol_ref:
        return False
    if not np.any(element_gradient_norms(state.mesh, state.v) > 0.0):
        return False
    marked = mark_by_gradient(state.mesh, state.v, config.refine_fraction)
    mesh, prolong = refine(state.mesh, marked)
    v = np.clip(prolong.apply(state.v), 0.0, 1.0)
    v[inner_band(mesh, config.d0)] = 0.0
    state.mesh, state.v = mesh, v
    attach(state, config, measurements)
    return True


def run(config: InversionConfig, measurements: Sequence[Measurement], mesh: Mesh | None = None,
        v0: np.ndarray | None = None, state: InversionState | None = None,
        callback: Callable[[InversionState, HistoryRow], None] | None = None) -> InversionState:
    """Iterate until the step norm drops to ``tol`` or ``max_iterations`` accepted steps.

    Pass ``state`` to continue an earlier run (for instance one restored from
    a snapshot) instead of ``mesh``/``v0``.
    """
    if state is None:
        if mesh is None:
            raise ValueError("either mesh or state is required")
        state = initial_state(mesh, config, measurements, v0)
    elif state.problem is None:
        attach(state, config, measurements)
    while state.n < config.max_iterations and not state.converged:
        _, ok = step(state, config)
        if not ok:
            if state.consecutive_rejections >= config.max_rejections:
                raise InversionError(
                    f"{state.consecutive_rejections} consecutive rejected steps at n={state.n} "
                    f"(tau={state.tau:.3e}); the flow direction is not a descent direction")
            continue
        if state.step_norm <= config.tol:
            state.converged = True
        else:
            maybe_refine(state, config, measurements)
        if callback is not None:
            callback(state, state.history[-1])
    return state


def jaccard(mesh: Mesh, v: np.ndarray, truth: ShapeSpec, threshold: float = 0.5) -> float:
    """|{v >= threshold} ∩ C| / |{v >= threshold} ∪ C| by edge-midpoint quadrature."""
    v = np.asarray(v, dtype=float)
    t = mesh.triangles
    xy = mesh.vertices
    pairs = ((1, 2), (2, 0), (0, 1))
    inter = union = 0.0
    for a, b in pairs:
        pts = 0.5 * (xy[t[:, a]] + xy[t[:, b]])
        vals = 0.5 * (v[t[:, a]] + v[t[:, b]])
        rec = vals >= threshold
        tru = truth.contains(pts)
        inter += float(np.dot(mesh.areas, rec & tru))
        union += float(np.dot(mesh.areas, rec | tru))
    return inter / union if union > 0 else 0.0


def reconstruction_centroid(mesh: Mesh, v: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Centroid of {v >= threshold} by the same quadrature; NaN if empty."""
    v = np.asarray(v, dtype=float)
    t = mesh.triangles
    xy = mesh.vertices
    mass, moment = 0.0, np.zeros(2)
    for a, b in ((1, 2), (2, 0), (0, 1)):
        pts = 0.5 * (xy[t[:, a]] + xy[t[:, b]])
        w = mesh.areas * (0.5 * (v[t[:, a]] + v[t[:, b]]) >= threshold)
        mass += w.sum()
        moment += w @ pts
    return moment / mass if mass > 0 else np.full(2, np.nan)
