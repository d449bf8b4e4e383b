"""Bilateral obstacle QPs: primal-dual active set solver and a projected Gauss-Seidel oracle.

The problem is ``min 1/2 v'Av - b'v`` subject to ``0 <= v <= 1`` and
``v = 0`` on a fixed index set.  Fixed indices are eliminated before the
active-set iteration.  With ``r = Av - b`` the optimality conditions read
``r >= 0`` where ``v = 0``, ``r <= 0`` where ``v = 1`` and ``r = 0``
elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem.linsolve import SolverError, pcg


class PDASError(RuntimeError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


@dataclass
class ObstacleQP:
    A: sp.csr_matrix
    b: np.ndarray
    fixed: np.ndarray = None

    def __post_init__(self):
        self.A = sp.csr_matrix(self.A)
        self.b = np.asarray(self.b, dtype=float)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.b.shape != (n,):
            raise ValueError("A must be square and match b")
        self.fixed = (np.zeros(0, dtype=np.int64) if self.fixed is None
                      else np.unique(np.asarray(self.fixed, dtype=np.int64)))

    @property
    def size(self) -> int:
        return len(self.b)

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.size, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def objective(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(0.5 * v @ (self.A @ v) - self.b @ v)


@dataclass
class KktCertificate:
    v: np.ndarray
    multiplier: np.ndarray
    active_lower: np.ndarray
    active_upper: np.ndarray
    inactive_residual: float
    sign_violation: float
    bound_violation: float
    fixed_violation: float
    tol: float

    @property
    def valid(self) -> bool:
        return (self.inactive_residual <= self.tol and self.sign_violation <= self.tol
                and self.bound_violation == 0.0 and self.fixed_violation == 0.0)


def certificate(qp: ObstacleQP, v: np.ndarray, tol: float | None = None) -> KktCertificate:
    """KKT audit of ``v`` with multiplier ``lambda = b - A v`` on the free indices."""
    v = np.asarray(v, dtype=float)
    if tol is None:
        tol = kkt_tolerance(qp)
    lam = qp.b - qp.A @ v
    free = qp.free
    vf, lf = v[free], lam[free]
    lower = free[vf == 0.0]
    upper = free[vf == 1.0]
    inactive = (vf > 0.0) & (vf < 1.0)
    inact = float(np.max(np.abs(lf[inactive]), initial=0.0))
    sign = max(float(np.max(lam[lower], initial=-np.inf)),
               float(np.max(-lam[upper], initial=-np.inf)), 0.0)
    bound = float(max(np.max(-vf, initial=0.0), np.max(vf - 1.0, initial=0.0)))
    fixed = float(np.max(np.abs(v[qp.fixed]), initial=0.0))
    return KktCertificate(v, lam, lower, upper, inact, sign, bound, fixed, tol)


def kkt_tolerance(qp: ObstacleQP) -> float:
    return 1e-10 * max(float(np.max(np.abs(qp.b), initial=0.0)), 1e-300)


def _reduced_solve(A, rhs, x0):
    n = len(rhs)
    if n == 0:
        return np.zeros(0)
    rtol = 1e-15
    atol = 1e-13 * max(float(np.max(np.abs(rhs), initial=0.0)), 1e-300)
    x, _, ok = pcg(A, rhs, x0=x0, rtol=rtol, atol=atol)
    if not ok:
        raise SolverError("reduced PDAS system did not converge")
    return x


def pdas_solve(qp: ObstacleQP, c_param: float | None = None, v_init=None,
               max_outer: int = 100, kkt_tol: float | None = None):
    """Primal-dual active set iteration.

    Active sets from the current iterate ``v`` and residual ``r = Av - b``:
    lower ``{r - c v > 0}``, upper ``{r + c (1 - v) < 0}``.  Each outer
    iteration solves the reduced SPD system on the inactive indices.

    Returns ``(v, certificate, outer_iterations)``.
    """
    n = qp.size
    free = qp.free
    A = qp.A[free][:, free].tocsr()
    b = qp.b[free]
    if c_param is None:
        c_param = 1e2 * float(np.max(A.diagonal(), initial=1.0))
    if kkt_tol is None:
        kkt_tol = kkt_tolerance(qp)
    v = np.zeros(len(free)) if v_init is None else np.array(v_init, dtype=float)[free]

    def sets(v):
        r = A @ v - b
        return r - c_param * v > 0, r + c_param * (1.0 - v) < 0

    def full(vf):
        out = np.zeros(n)
        out[free] = vf
        return out

    lower, upper = sets(v)
    seen = set()
    for it in range(1, max_outer + 1):
        inactive = ~(lower | upper)
        vn = np.zeros(len(free))
        vn[upper] = 1.0
        idx = np.flatnonzero(inactive)
        if idx.size:
            A_ii = A[idx][:, idx]
            rhs = b[idx] - A[idx][:, upper] @ np.ones(int(upper.sum()))
            vn[idx] = _reduced_solve(A_ii, rhs, np.clip(v[idx], 0.0, 1.0))
        v = vn
        new_lower, new_upper = sets(v)
        repeat = np.array_equal(new_lower, lower) and np.array_equal(new_upper, upper)
        if repeat or it == max_outer:
            # project round-off in the inactive solve onto the box
            vc = full(np.clip(v, 0.0, 1.0))
            cert = certificate(qp, vc, kkt_tol)
            if repeat and cert.valid:
                return vc, cert, it
            if repeat:
                raise PDASError("active sets settled but the KKT certificate fails", cert)
        key = (new_lower.tobytes(), new_upper.tobytes())
        if key in seen:
            raise PDASError("active-set iteration cycles", certificate(qp, full(np.clip(v, 0, 1)), kkt_tol))
        seen.add(key)
        lower, upper = new_lower, new_upper
    raise PDASError(f"no convergence within {max_outer} outer iterations",
                    certificate(qp, full(np.clip(v, 0.0, 1.0)), kkt_tol))


def projected_gauss_seidel(qp: ObstacleQP, tol: float = 1e-12, max_sweeps: int = 1_000_000,
                           v_init=None) -> np.ndarray:
    """Reference solver: Gauss-Seidel sweeps clamped to [0, 1], fixed indices pinned at 0."""
    A = qp.A.tocsr()
    b = qp.b
    n = qp.size
    v = np.zeros(n) if v_init is None else np.clip(np.array(v_init, dtype=float), 0.0, 1.0)
    v[qp.fixed] = 0.0
    free = qp.free.tolist()
    indptr, indices, data = A.indptr, A.indices, A.data
    diag = A.diagonal()
    for _ in range(max_sweeps):
        change = 0.0
        for i in free:
            lo, hi = indptr[i], indptr[i + 1]
            ri = b[i] - np.dot(data[lo:hi], v[indices[lo:hi]])
            new = min(max(v[i] + ri / diag[i], 0.0), 1.0)
            change = max(change, abs(new - v[i]))
            v[i] = new
        if change <= tol:
            return v
    raise PDASError(f"projected Gauss-Seidel did not converge in {max_sweeps} sweeps")
