"""OPF problem data: DER capability sets, the curtailment/reactive cost, voltage
limits, and KKT residuals used to certify equilibria.

Setpoints are ordered ``u = [p_1..p_G, q_1..q_G]`` everywhere. Constraints
are stacked as voltage-lower (one per monitored bus), voltage-upper, then the
five capability constraints of each DER in fleet order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .netmodel import DimensionMismatch, LinearVoltageModel

Q_FRAC_DEFAULT = 0.44
N_CAPABILITY = 5
DEGENERATE_TOL = 1e-6


class NegativeDual(ValueError):
    pass


@dataclass(frozen=True)
class DerDevice:
    node: int
    s_n: float
    p_max: float
    q_frac: float = Q_FRAC_DEFAULT
    c_p: float = 3.0
    c_q: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.s_n <= 0:
            raise ValueError(f"DER {self.name or self.node}: s_n must be positive")
        if not 0.0 <= self.p_max <= self.s_n * (1 + 1e-12):
            raise ValueError(f"DER {self.name or self.node}: p_max={self.p_max} outside [0, s_n={self.s_n}]")
        if not 0.0 <= self.q_frac <= 1.0:
            raise ValueError(f"DER {self.name or self.node}: q_frac must lie in [0, 1]")


def eval_constraints(device: DerDevice, p: float, q: float) -> np.ndarray:
    """Capability constraints; all entries <= 0 iff ``(p, q)`` is admissible."""
    qlim = device.q_frac * device.s_n
    return np.array([p * p + q * q - device.s_n**2, p - device.p_max, -p, -qlim - q, q - qlim])


def constraint_jacobian(device: DerDevice, p: float, q: float) -> np.ndarray:
    return np.array([[2 * p, 2 * q], [1.0, 0.0], [-1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class DerFleet:
    devices: tuple[DerDevice, ...]

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        d = self.devices
        object.__setattr__(self, "nodes", np.array([x.node for x in d], dtype=int))
        object.__setattr__(self, "s_n", np.array([x.s_n for x in d], dtype=float))
        object.__setattr__(self, "p_max", np.array([x.p_max for x in d], dtype=float))
        object.__setattr__(self, "q_frac", np.array([x.q_frac for x in d], dtype=float))
        object.__setattr__(self, "c_p", np.array([x.c_p for x in d], dtype=float))
        object.__setattr__(self, "c_q", np.array([x.c_q for x in d], dtype=float))

    def __len__(self):
        return len(self.devices)

    def with_p_max(self, p_max: Sequence[float]) -> "DerFleet":
        p_max = np.asarray(p_max, dtype=float)
        if p_max.shape != (len(self),):
            raise DimensionMismatch("one p_max per DER expected")
        return DerFleet(tuple(replace(d, p_max=float(pm)) for d, pm in zip(self.devices, p_max)))


def load_fleet(path: str | Path, base_mva: float) -> DerFleet:
    """Read ``{ders: [{node, s_n_kva, q_frac, c_p, c_q}]}``; kVA -> pu on ``base_mva``.

    Available power starts at the rating and is overwritten by scenario data.
    """
    with open(path) as fh:
        data = json.load(fh)
    devices = []
    for k, d in enumerate(data["ders"]):
        s_n = float(d["s_n_kva"]) / 1000.0 / base_mva
        devices.append(
            DerDevice(
                node=int(d["node"]),
                s_n=s_n,
                p_max=s_n,
                q_frac=float(d.get("q_frac", Q_FRAC_DEFAULT)),
                c_p=float(d.get("c_p", 3.0)),
                c_q=float(d.get("c_q", 1.0)),
                name=str(d.get("name", f"der{k}")),
            )
        )
    return DerFleet(tuple(devices))


@dataclass(frozen=True, eq=False)
class OpfProblem:
    fleet: DerFleet
    v_lower: float = 0.95
    v_upper: float = 1.05
    monitored: tuple[int, ...] = ()
    cv_weight: float = 0.0  # optional w * sum (nu - 1)^2 voltage cost

    def __post_init__(self):
        if not self.v_lower < self.v_upper:
            raise ValueError("v_lower must be below v_upper")
        object.__setattr__(self, "monitored", tuple(int(m) for m in self.monitored))

    @property
    def n_ders(self) -> int:
        return len(self.fleet)

    @property
    def n_constraints(self) -> int:
        return 2 * len(self.monitored) + N_CAPABILITY * self.n_ders

    def with_p_max(self, p_max) -> "OpfProblem":
        return replace(self, fleet=self.fleet.with_p_max(p_max))

    def constraint_ids(self) -> list[str]:
        ids = [f"v_lower[{m}]" for m in self.monitored] + [f"v_upper[{m}]" for m in self.monitored]
        names = ("disk", "p_max", "p_min", "q_min", "q_max")
        for i in range(self.n_ders):
            ids += [f"der{i}.{nm}" for nm in names]
        return ids


def _check_u(problem: OpfProblem, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (2 * problem.n_ders,):
        raise DimensionMismatch(f"u has shape {u.shape}, expected ({2 * problem.n_ders},)")
    return u


def eval_cost(problem: OpfProblem, u) -> float:
    u = _check_u(problem, u)
    f = problem.fleet
    g = f.s_n.size
    p, q = u[:g], u[g:]
    return float(np.sum(f.c_p * ((f.s_n - p) / f.s_n) ** 2 + f.c_q * (q / f.s_n) ** 2))


def cost_gradient(problem: OpfProblem, u) -> np.ndarray:
    u = _check_u(problem, u)
    f = problem.fleet
    g = f.s_n.size
    p, q = u[:g], u[g:]
    return np.concatenate([-2 * f.c_p * (f.s_n - p) / f.s_n**2, 2 * f.c_q * q / f.s_n**2])


def voltage_cost_gradient(problem: OpfProblem, nu) -> np.ndarray:
    return 2.0 * problem.cv_weight * (np.asarray(nu, dtype=float) - 1.0)


def capability_values(problem: OpfProblem, u) -> np.ndarray:
    """Stacked capability constraints of all DERs (length 5G)."""
    f = problem.fleet
    g = f.s_n.size
    p, q = u[:g], u[g:]
    qlim = f.q_frac * f.s_n
    return np.column_stack([p * p + q * q - f.s_n**2, p - f.p_max, -p, -qlim - q, q - qlim]).ravel()


def capability_jacobian(problem: OpfProblem, u) -> np.ndarray:
    """Jacobian (5G x 2G) of :func:`capability_values` with respect to ``u``."""
    g = problem.n_ders
    p, q = u[:g], u[g:]
    J = np.zeros((N_CAPABILITY * g, 2 * g))
    for i in range(g):
        r = N_CAPABILITY * i
        J[r, i], J[r, g + i] = 2 * p[i], 2 * q[i]
        J[r + 1, i] = 1.0
        J[r + 2, i] = -1.0
        J[r + 3, g + i] = -1.0
        J[r + 4, g + i] = 1.0
    return J


def constraint_values(problem: OpfProblem, u, nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    return np.concatenate([problem.v_lower - nu, nu - problem.v_upper, capability_values(problem, u)])


def constraint_gradients(problem: OpfProblem, u, jacobian) -> np.ndarray:
    return np.vstack([-jacobian, jacobian, capability_jacobian(problem, u)])


@dataclass(frozen=True)
class KktReport:
    stationarity_residual: float
    primal_infeasibility: float
    complementarity_residual: float
    active_set: list[str] = field(default_factory=list)
    degenerate: list[str] = field(default_factory=list)

    @property
    def max_residual(self) -> float:
        return max(self.stationarity_residual, self.primal_infeasibility, self.complementarity_residual)


def kkt_residual(
    problem: OpfProblem,
    lin: LinearVoltageModel,
    u,
    nu,
    duals,
    jacobian: np.ndarray | None = None,
    active_tol: float = DEGENERATE_TOL,
) -> KktReport:
    """KKT residuals of the OPF at ``u`` with voltages ``nu`` and multipliers ``duals``.

    The voltage Jacobian defaults to the constant ``lin.J_hat``; pass the exact
    ``J_H`` to certify points of the nonlinear problem.
    """
    u = _check_u(problem, u)
    duals = np.asarray(duals, dtype=float)
    if duals.shape != (problem.n_constraints,):
        raise DimensionMismatch(f"expected {problem.n_constraints} duals, got {duals.shape}")
    if np.any(duals < 0):
        raise NegativeDual(f"dual variables must be nonnegative (min {duals.min():.3e})")
    J = lin.J_hat if jacobian is None else np.asarray(jacobian)
    g = constraint_values(problem, u, nu)
    grad = cost_gradient(problem, u) + J.T @ voltage_cost_gradient(problem, nu)
    stat = grad + constraint_gradients(problem, u, J).T @ duals
    ids = problem.constraint_ids()
    return KktReport(
        stationarity_residual=float(np.max(np.abs(stat))),
        primal_infeasibility=float(max(0.0, g.max())),
        complementarity_residual=float(np.max(np.abs(duals * g))),
        active_set=[ids[k] for k in np.flatnonzero(np.abs(g) <= active_tol)],
        degenerate=[ids[k] for k in np.flatnonzero((np.abs(g) < active_tol) & (duals < active_tol))],
    )
