"""P1 vector finite elements for isotropic linear elasticity with an ersatz coefficient.

Displacement dofs are interleaved: vertex ``i`` owns dofs ``2i`` (x) and
``2i + 1`` (y).  The ersatz tensor is ``C(v) = s C0`` with the elementwise
factor ``s_T = 1 + (delta - 1) * mean(v on T)``; since strains are constant
per element and ``v`` is linear, the centroid value integrates the
stiffness exactly.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..mesh import Label, Mesh
from .linsolve import RESIDUAL_TOL, SolverError, SparseSystem, relative_residual, solve_spd
from .pattern import ScatterPattern


@dataclass(frozen=True)
class IsotropicMaterial:
    """C0 A = 2 mu A + lam tr(A) I on symmetric 2x2 matrices."""

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must be positive, got mu={self.mu}")
        if not self.lam + self.mu > 0:
            raise ValueError(f"need lam + mu > 0 for a positive definite tensor, got {self.lam + self.mu}")

    @property
    def voigt(self) -> np.ndarray:
        """Matrix acting on (e_xx, e_yy, 2 e_xy)."""
        mu, lam = self.mu, self.lam
        return np.array([[2 * mu + lam, lam, 0.0], [lam, 2 * mu + lam, 0.0], [0.0, 0.0, mu]])

    @property
    def coercivity(self) -> float:
        """Smallest eigenvalue of C0 on symmetric matrices."""
        return float(min(2 * self.mu, 2 * (self.mu + self.lam)))


@dataclass(frozen=True)
class ErsatzCoefficient:
    """Phase-dependent scaling of C0: 1 on solid (v=0), delta inside the cavity (v=1)."""

    delta: float
    phase: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")

    def factors(self, mesh: Mesh) -> np.ndarray:
        v = np.asarray(self.phase, dtype=float)
        if v.shape != (mesh.n_vertices,):
            raise ValueError("phase field does not match the mesh")
        return element_factors(mesh, v, self.delta)


def element_factors(mesh: Mesh, v: np.ndarray, delta: float) -> np.ndarray:
    return 1.0 + (delta - 1.0) * np.asarray(v, dtype=float)[mesh.triangles].mean(axis=1)


@dataclass(frozen=True)
class BoundaryLoad:
    """Closed-form traction g(x, y) applied on Sigma_N."""

    name: str
    func: Callable[[np.ndarray, np.ndarray], tuple]

    def nodal(self, mesh: Mesh) -> np.ndarray:
        """Nodal interpolant g_h at every vertex, shape (nv, 2)."""
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        gx, gy = self.func(x, y)
        return np.stack([np.broadcast_to(gx, x.shape), np.broadcast_to(gy, x.shape)], axis=1).astype(float)


LOADS = {
    "g1": BoundaryLoad("g1", lambda x, y: (x, y)),
    "g2": BoundaryLoad("g2", lambda x, y: (-y, -x)),
}


def get_load(name: str) -> BoundaryLoad:
    try:
        return LOADS[name]
    except KeyError:
        raise ValueError(f"unknown load {name!r}; known: {sorted(LOADS)}") from None


def strain_matrices(mesh: Mesh) -> np.ndarray:
    """B matrices (nt, 3, 6) mapping element dofs to (e_xx, e_yy, 2 e_xy)."""
    g = mesh.gradients
    B = np.zeros((mesh.n_triangles, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    return B


def element_stiffness(coords: np.ndarray, material: IsotropicMaterial, s: float = 1.0) -> np.ndarray:
    """6x6 stiffness of one triangle scaled by the ersatz factor ``s``."""
    coords = np.asarray(coords, dtype=float)
    tri = Mesh(coords, [[0, 1, 2]], np.zeros((0, 2)), np.zeros(0))
    if not tri.signed_areas[0] > 0:
        raise ValueError("degenerate or clockwise triangle")
    return s * element_stiffnesses(tri, material)[0]


def element_stiffnesses(mesh: Mesh, material: IsotropicMaterial) -> np.ndarray:
    """Unscaled element stiffness matrices for every triangle, (nt, 6, 6)."""
    B = strain_matrices(mesh)
    return mesh.areas[:, None, None] * np.einsum("tai,ab,tbj->tij", B, material.voigt, B)


def element_dofs(mesh: Mesh) -> np.ndarray:
    t = mesh.triangles
    return np.stack([2 * t, 2 * t + 1], axis=2).reshape(-1, 6)


def vertex_dofs(vertices: np.ndarray) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=np.int64)
    return np.stack([2 * vertices, 2 * vertices + 1], axis=1).ravel()


def edge_mass_pairing(mesh: Mesh, a: np.ndarray, b: np.ndarray, label: Label = Label.SIGMA_N) -> float:
    """Integral of a_h . b_h over edges with ``label``; both P1 with nodal values (nv, k).

    Equivalent to 2-point Gauss quadrature on each edge, which is exact here.
    """
    edges = mesh.boundary_edges[mesh.boundary_labels == label]
    if len(edges) == 0:
        return 0.0
    length = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    a = np.asarray(a, dtype=float).reshape(mesh.n_vertices, -1)
    b = np.asarray(b, dtype=float).reshape(mesh.n_vertices, -1)
    ai, aj = a[edges[:, 0]], a[edges[:, 1]]
    bi, bj = b[edges[:, 0]], b[edges[:, 1]]
    per_edge = (2 * (ai * bi).sum(1) + (ai * bj).sum(1) + (aj * bi).sum(1) + 2 * (aj * bj).sum(1)) / 6.0
    return float(np.dot(length, per_edge))


def load_vector(mesh: Mesh, g_nodal: np.ndarray) -> np.ndarray:
    """Traction load F_i = int_{Sigma_N} g_h . phi_i, interleaved (2 nv,)."""
    g_nodal = np.asarray(g_nodal, dtype=float).reshape(mesh.n_vertices, 2)
    F = np.zeros((mesh.n_vertices, 2))
    edges = mesh.boundary_edges[mesh.boundary_labels == Label.SIGMA_N]
    if len(edges):
        length = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
        gi, gj = g_nodal[edges[:, 0]], g_nodal[edges[:, 1]]
        np.add.at(F, edges[:, 0], length[:, None] * (2 * gi + gj) / 6.0)
        np.add.at(F, edges[:, 1], length[:, None] * (gi + 2 * gj) / 6.0)
    return F.ravel()


class ElasticityOperator:
    """Cached assembly and factorised solves for one mesh and material.

    Neumann states are clamped on Sigma_D; Dirichlet states take prescribed
    values on every outer-boundary vertex (f on Sigma_N, 0 on Sigma_D).
    Cavity walls are traction free and need no boundary term.
    """

    def __init__(self, mesh: Mesh, material: IsotropicMaterial):
        self.mesh = mesh
        self.material = material
        self.n_dof = 2 * mesh.n_vertices
        self.K0 = element_stiffnesses(mesh, material)
        dofs = element_dofs(mesh)
        self.full_pattern = ScatterPattern(dofs, self.n_dof)

        clamped = vertex_dofs(mesh.dirichlet_vertices)
        if len(clamped) == 0:
            raise SolverError("Sigma_D is empty: the Neumann problem is singular")
        self.neumann_fixed = clamped
        self.neumann_free = np.setdiff1d(np.arange(self.n_dof), clamped)
        self._neumann_pattern = ScatterPattern(dofs, self.n_dof, self.neumann_free, self.neumann_free)

        self.dirichlet_fixed = vertex_dofs(mesh.outer_vertices)
        self.dirichlet_free = np.setdiff1d(np.arange(self.n_dof), self.dirichlet_fixed)
        self._dirichlet_pattern = ScatterPattern(dofs, self.n_dof, self.dirichlet_free, self.dirichlet_free)
        self._coupling_pattern = ScatterPattern(dofs, self.n_dof, self.dirichlet_free, self.dirichlet_fixed)

    def _weighted(self, s):
        s = np.ones(self.mesh.n_triangles) if s is None else np.asarray(s, dtype=float)
        return s[:, None, None] * self.K0

    def stiffness(self, s=None) -> sp.csr_matrix:
        return self.full_pattern.assemble(self._weighted(s))

    def element_energies(self, u: np.ndarray) -> np.ndarray:
        """u_T^T K0_T u_T per triangle, i.e. |T| C0 e(u):e(u)."""
        uT = np.asarray(u, dtype=float).reshape(-1)[element_dofs(self.mesh)]
        return np.einsum("ti,ti->t", np.einsum("tij,tj->ti", self.K0, uT), uT)

    @staticmethod
    def _factor_solve(A, B):
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A")
        X = lu.solve(B)
        for k in range(B.shape[1]):
            res = relative_residual(A, X[:, k], B[:, k])
            if np.any(B[:, k]) and not res <= RESIDUAL_TOL:
                raise SolverError("sparse factorisation missed the residual target", res)
        return X

    def solve_neumann(self, s, loads) -> list[np.ndarray]:
        """Neumann states for nodal tractions ``loads`` (each (nv, 2)); returns (nv, 2) arrays."""
        loads = list(loads)
        if not loads:
            return []
        A = self._neumann_pattern.assemble(self._weighted(s))
        B = np.stack([load_vector(self.mesh, g)[self.neumann_free] for g in loads], axis=1)
        X = self._factor_solve(A, B)
        out = []
        for k in range(len(loads)):
            u = np.zeros(self.n_dof)
            u[self.neumann_free] = X[:, k]
            out.append(u.reshape(-1, 2))
        return out

    def solve_dirichlet(self, s, traces) -> list[np.ndarray]:
        """Dirichlet states with ``u = f`` on Sigma_N vertices and 0 on Sigma_D vertices."""
        traces = list(traces)
        if not traces:
            return []
        W = self._weighted(s)
        A = self._dirichlet_pattern.assemble(W)
        C = self._coupling_pattern.assemble(W)
        lifts = [self.dirichlet_values(f) for f in traces]
        B = np.stack([-(C @ lift[self.dirichlet_fixed]) for lift in lifts], axis=1)
        X = self._factor_solve(A, B) if self.dirichlet_free.size else np.zeros((0, len(traces)))
        out = []
        for k, lift in enumerate(lifts):
            u = lift.copy()
            u[self.dirichlet_free] = X[:, k]
            out.append(u.reshape(-1, 2))
        return out

    def dirichlet_values(self, f: np.ndarray) -> np.ndarray:
        """Discrete lifting: f on Sigma_N vertices, zero elsewhere (interleaved)."""
        f = np.asarray(f, dtype=float).reshape(self.mesh.n_vertices, 2)
        lift = np.zeros((self.mesh.n_vertices, 2))
        nv = self.mesh.neumann_vertices
        lift[nv] = f[nv]
        return lift.ravel()


_operators: "weakref.WeakKeyDictionary[Mesh, dict]" = weakref.WeakKeyDictionary()


def operator_for(mesh: Mesh, material: IsotropicMaterial) -> ElasticityOperator:
    per_mesh = _operators.setdefault(mesh, {})
    op = per_mesh.get(material)
    if op is None:
        op = per_mesh[material] = ElasticityOperator(mesh, material)
    return op


def assemble(mesh: Mesh, material: IsotropicMaterial, ersatz: ErsatzCoefficient | None = None,
             load: np.ndarray | None = None, trace: np.ndarray | None = None) -> SparseSystem:
    """Full system with constraints eliminated symmetrically.

    With ``load`` (nodal traction) the Neumann state is assembled, clamped on
    Sigma_D.  With ``trace`` (nodal f) the Dirichlet state is assembled.
    Constrained rows and columns become identity rows carrying the
    prescribed value.
    """
    if (load is None) == (trace is None):
        raise ValueError("pass exactly one of load or trace")
    op = operator_for(mesh, material)
    s = None if ersatz is None else ersatz.factors(mesh)
    K = op.stiffness(s)
    if load is not None:
        fixed = op.neumann_fixed
        values = np.zeros(len(fixed))
        rhs = load_vector(mesh, load)
    else:
        fixed = op.dirichlet_fixed
        values = op.dirichlet_values(trace)[fixed]
        rhs = np.zeros(op.n_dof)
    return _constrained(K, rhs, fixed, values)


def _constrained(K, rhs, fixed, values) -> SparseSystem:
    # symmetric elimination: identity rows and columns on the fixed dofs
    if len(fixed) == 0:
        raise SolverError("no displacement constraint: singular system refused")
    n = K.shape[0]
    x_fixed = np.zeros(n)
    x_fixed[fixed] = values
    rhs = rhs - K @ x_fixed
    rhs[fixed] = values
    keep = np.ones(n)
    keep[fixed] = 0.0
    D = sp.diags(keep)
    A = (D @ K @ D + sp.diags(1.0 - keep)).tocsr()
    return SparseSystem(A, rhs, fixed, values)


def solve_neumann_state(mesh: Mesh, material: IsotropicMaterial, ersatz: ErsatzCoefficient,
                        g: np.ndarray) -> np.ndarray:
    """u_N: traction ``g`` (nodal, (nv, 2)) on Sigma_N, clamp on Sigma_D."""
    return operator_for(mesh, material).solve_neumann(ersatz.factors(mesh), [g])[0]


def solve_dirichlet_state(mesh: Mesh, material: IsotropicMaterial, ersatz: ErsatzCoefficient,
                          f: np.ndarray) -> np.ndarray:
    """u_D: displacement ``f`` on Sigma_N, zero on Sigma_D."""
    return operator_for(mesh, material).solve_dirichlet(ersatz.factors(mesh), [f])[0]


def solve_cavity_forward(hole_mesh: Mesh, material: IsotropicMaterial, g: np.ndarray) -> np.ndarray:
    """Neumann solve on a hole mesh; cavity walls are traction free."""
    return operator_for(hole_mesh, material).solve_neumann(None, [g])[0]


def solve_prescribed(mesh: Mesh, material: IsotropicMaterial, vertices, values,
                     ersatz: ErsatzCoefficient | None = None, method: str = "direct") -> np.ndarray:
    """Displacement with ``u = values`` ((k, 2)) at ``vertices`` and zero traction elsewhere."""
    op = operator_for(mesh, material)
    vertices = np.asarray(vertices, dtype=np.int64)
    fixed = vertex_dofs(vertices)
    vals = np.asarray(values, dtype=float).reshape(len(vertices), 2).ravel()
    K = op.stiffness(None if ersatz is None else ersatz.factors(mesh))
    system = _constrained(K, np.zeros(op.n_dof), fixed, vals)
    return solve_spd(system, method=method).reshape(-1, 2)
