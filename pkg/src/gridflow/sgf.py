"""Feedback-based safe gradient flow.

The controller direction is the minimum-norm correction of the negative cost
gradient subject to barrier-style rate constraints: every constraint
``c(u) <= 0`` contributes ``grad c^T theta <= -beta c(u)``. Voltage
constraints use measured magnitudes and a voltage Jacobian (constant linear
model by default, exact sensitivity when supplied).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .netmodel import LinearVoltageModel
from .opf import OpfProblem, constraint_gradients, constraint_values, cost_gradient, voltage_cost_gradient
from .qp import INFEASIBLE, QP_MAX_ITER, TOL_QP, QpProblem, QpSolution, qp_solve

log = logging.getLogger(__name__)


class QpInfeasible(RuntimeError):
    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


@dataclass(frozen=True)
class SgfConfig:
    beta: float = 1.0
    eta: float = 0.2
    dt: float = 1.0
    tol_qp: float = TOL_QP
    qp_max_iter: int = QP_MAX_ITER

    def __post_init__(self):
        if self.beta <= 0 or self.eta <= 0:
            raise ValueError("beta and eta must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True, eq=False)
class ControllerState:
    """Setpoints plus controller-specific memory."""

    u: np.ndarray
    kind: str = "sgf"
    duals: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def sgf_qp(problem: OpfProblem, jacobian: np.ndarray, u, nu, beta: float) -> QpProblem:
    u = np.asarray(u, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (len(problem.monitored),):
        raise ValueError(f"expected {len(problem.monitored)} voltage readings, got {nu.shape}")
    g = cost_gradient(problem, u) + jacobian.T @ voltage_cost_gradient(problem, nu)
    A = constraint_gradients(problem, u, jacobian)
    b = -beta * constraint_values(problem, u, nu)
    return QpProblem(g, A, b)


def solve_direction_qp(qp: QpProblem, config: SgfConfig) -> QpSolution:
    return qp_solve(qp, tol=config.tol_qp, max_iter=config.qp_max_iter)


def sgf_direction(
    problem: OpfProblem,
    lin: LinearVoltageModel,
    u,
    nu_measured,
    config: SgfConfig,
    jacobian: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Safe-flow direction and QP multipliers at ``(u, nu_measured)``.

    Raises
    ------
    QpInfeasible
        No direction satisfies all rate constraints at this state.
    """
    J = lin.J_hat if jacobian is None else jacobian
    qp = sgf_qp(problem, J, u, nu_measured, config.beta)
    sol = solve_direction_qp(qp, config)
    if sol.status == INFEASIBLE:
        snapshot = {"u": np.array(u, dtype=float), "nu": np.array(nu_measured, dtype=float)}
        log.warning("safe-flow QP infeasible at u=%s nu=%s", snapshot["u"], snapshot["nu"])
        raise QpInfeasible("safe-flow QP is infeasible at the current state", snapshot)
    return sol.theta, sol.duals


def sgf_step(
    state: ControllerState,
    problem: OpfProblem,
    lin: LinearVoltageModel,
    nu_measured,
    config: SgfConfig,
    dt: float | None = None,
    jacobian: np.ndarray | None = None,
) -> ControllerState:
    """One forward-Euler step ``u <- u + dt * eta * F(u, nu)``."""
    dt = config.dt if dt is None else dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    direction, duals = sgf_direction(problem, lin, state.u, nu_measured, config, jacobian)
    return replace(state, u=state.u + dt * config.eta * direction, duals=duals)


def generic_safe_flow(
    grad_f: Callable[[np.ndarray], np.ndarray],
    g: Callable[[np.ndarray], np.ndarray],
    g_jac: Callable[[np.ndarray], np.ndarray],
    x,
    beta: float,
    tol: float = TOL_QP,
) -> np.ndarray:
    """``argmin 1/2 ||theta + grad f(x)||^2  s.t.  dg/dx theta <= -beta g(x)``."""
    x = np.asarray(x, dtype=float)
    qp = QpProblem(np.asarray(grad_f(x), dtype=float), np.atleast_2d(g_jac(x)), -beta * np.atleast_1d(g(x)))
    sol = qp_solve(qp, tol=tol)
    if sol.status == INFEASIBLE:
        raise QpInfeasible("safe-flow QP is infeasible", {"x": x})
    return sol.theta
