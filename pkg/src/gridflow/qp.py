"""Dense dual active-set solver for projection-type QPs.

Solves ``min ||theta + g||^2  s.t.  A theta <= b`` with the Goldfarb-Idnani
method. The Hessian is the identity, so the unconstrained start is ``-g`` and
every subproblem is a least-squares update against the active normals.
Reported duals belong to the unscaled objective, i.e.
``2 (theta + g) + A^T duals = 0`` at the solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOL_QP = 1e-8
QP_MAX_ITER = 200

SOLVED = "solved"
INFEASIBLE = "infeasible"


class MaxIterExceeded(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class QpProblem:
    g: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float).ravel()
        A = np.asarray(self.A, dtype=float).reshape(-1, g.size)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("QP data must be finite")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class QpSolution:
    theta: np.ndarray
    duals: np.ndarray
    stationarity_residual: float
    feasibility_residual: float
    complementarity_residual: float
    status: str
    iterations: int = 0
    active: tuple[int, ...] = field(default=())


def kkt_residuals(qp: QpProblem, theta: np.ndarray, duals: np.ndarray) -> tuple[float, float, float]:
    """(stationarity, feasibility, complementarity) of a candidate solution."""
    viol = qp.A @ theta - qp.b
    stat = 2.0 * (theta + qp.g) + qp.A.T @ duals
    return (
        float(np.max(np.abs(stat))) if stat.size else 0.0,
        float(max(0.0, viol.max())) if viol.size else 0.0,
        float(np.max(np.abs(duals * viol))) if viol.size else 0.0,
    )


def qp_solve(qp: QpProblem, tol: float = TOL_QP, max_iter: int = QP_MAX_ITER) -> QpSolution:
    A, b, g = qp.A, qp.b, qp.g
    n, k = g.size, b.size
    x = -g.copy()
    active: list[int] = []
    lam: list[float] = []  # multipliers of the halved objective
    add_tol = 1e-12 * max(1.0, float(np.max(np.abs(b)))) if k else 0.0
    iters = 0

    def finish(status):
        duals = np.zeros(k)
        for j, lj in zip(active, lam):
            duals[j] = 2.0 * max(lj, 0.0)
        stat, feas, comp = kkt_residuals(qp, x, duals)
        return QpSolution(x, duals, stat, feas, comp, status, iters, tuple(active))

    while True:
        if k == 0:
            return finish(SOLVED)
        slack = b - A @ x
        p = int(np.argmin(slack))
        if slack[p] >= -add_tol:
            sol = finish(SOLVED)
            if max(sol.stationarity_residual, sol.feasibility_residual, sol.complementarity_residual) > tol:
                raise MaxIterExceeded(
                    f"QP residuals above tolerance after termination "
                    f"({sol.stationarity_residual:.2e}, {sol.feasibility_residual:.2e}, {sol.complementarity_residual:.2e})"
                )
            return sol
        n_p = -A[p]  # GI works with n^T x >= -b
        lam_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                raise MaxIterExceeded(f"QP not solved within {max_iter} iterations")
            q = len(active)
            if q:
                N = -A[active].T
                Q, R = np.linalg.qr(N, mode="complete")
                Q1, Q2 = Q[:, :q], Q[:, q:]
                z = Q2 @ (Q2.T @ n_p)
                r = np.linalg.solve(R[:q, :q], Q1.T @ n_p)
            else:
                z = n_p.copy()
                r = np.zeros(0)
            # dual (partial) step length
            t1, drop = np.inf, -1
            for j in range(q):
                if r[j] > 1e-14:
                    ratio = lam[j] / r[j]
                    if ratio < t1:
                        t1, drop = ratio, j
            # primal (full) step length
            zz = float(z @ n_p)
            if zz > 1e-24 * max(1.0, float(n_p @ n_p)):
                t2 = (A[p] @ x - b[p]) / zz
            else:
                t2 = np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                return finish(INFEASIBLE)
            if np.isinf(t2):
                lam = [lj - t * rj for lj, rj in zip(lam, r)]
                lam_p += t
                del active[drop], lam[drop]
                continue
            x = x + t * z
            lam = [lj - t * rj for lj, rj in zip(lam, r)]
            lam_p += t
            if t2 <= t1:
                active.append(p)
                lam.append(lam_p)
                break
            del active[drop], lam[drop]
