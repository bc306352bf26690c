"""Single-phase network model: bus admittance partition, Z-bus power flow and
the constant-Jacobian linear voltage model.

Bus 0 is the substation (slack) bus; buses ``1..N`` are the PQ buses. All
arrays indexed by PQ bus use position ``bus - 1``. Quantities are per-unit on
``(base_mva, base_kv)``.

Sign convention: ``s_net`` holds complex *injections*. Non-controllable loads
are given consumption-positive and enter as ``-(p_l + j q_l)``.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TOL_PF = 1e-10
MAX_ITER_PF = 200
FD_STEP = 1e-5


class NetworkError(Exception):
    """Base class for network-model errors."""


class DisconnectedNetwork(NetworkError):
    pass


class SingularY(NetworkError):
    pass


class PowerFlowDiverged(NetworkError):
    def __init__(self, message, residual=np.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_shunt: float = 0.0  # total line charging, split half at each end


@dataclass(frozen=True, eq=False)
class NetworkModel:
    n_buses: int
    lines: tuple[Line, ...]
    v0: complex
    y0: complex
    ybar: np.ndarray
    Y: np.ndarray
    base_mva: float = 1.0
    base_kv: float = 20.0

    @property
    def n(self) -> int:
        """Number of PQ buses."""
        return self.n_buses - 1

    @cached_property
    def full_admittance(self) -> np.ndarray:
        full = np.empty((self.n_buses, self.n_buses), dtype=complex)
        full[0, 0] = self.y0
        full[0, 1:] = self.ybar
        full[1:, 0] = self.ybar
        full[1:, 1:] = self.Y
        return full

    @cached_property
    def Z(self) -> np.ndarray:
        return np.linalg.inv(self.Y)

    @cached_property
    def vbar(self) -> np.ndarray:
        """Nominal (zero-injection) voltage profile ``-Y^{-1} ybar v0``."""
        return -self.Z @ self.ybar * self.v0

    @cached_property
    def _source_current(self) -> np.ndarray:
        return self.ybar * self.v0


def build_admittance(
    lines: Sequence[Line],
    n_buses: int,
    v0: complex = 1.0 + 0.0j,
    base_mva: float = 1.0,
    base_kv: float = 20.0,
    cond_limit: float = 1e12,
) -> NetworkModel:
    """Stamp Pi-model lines into the bus admittance matrix and partition it.

    Raises
    ------
    SingularY
        A line has zero series impedance, or ``Y`` is numerically singular.
    DisconnectedNetwork
        Some bus cannot be reached from the substation.
    """
    if n_buses < 2:
        raise DisconnectedNetwork("network needs the substation and at least one bus")
    full = np.zeros((n_buses, n_buses), dtype=complex)
    adjacency: dict[int, list[int]] = {k: [] for k in range(n_buses)}
    for ln in lines:
        f, t = int(ln.from_bus), int(ln.to_bus)
        if not (0 <= f < n_buses and 0 <= t < n_buses) or f == t:
            raise DisconnectedNetwork(f"line {f}-{t} references an invalid bus")
        z = complex(ln.r, ln.x)
        if z == 0:
            raise SingularY(f"line {f}-{t} has zero series impedance")
        y = 1.0 / z
        ysh = 0.5j * ln.b_shunt
        full[f, f] += y + ysh
        full[t, t] += y + ysh
        full[f, t] -= y
        full[t, f] -= y
        adjacency[f].append(t)
        adjacency[t].append(f)

    seen = {0}
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for nb in adjacency[k]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    missing = sorted(set(range(n_buses)) - seen)
    if missing:
        raise DisconnectedNetwork(f"buses unreachable from substation: {missing}")

    Y = full[1:, 1:].copy()
    if not np.all(np.isfinite(Y)) or np.linalg.cond(Y) > cond_limit:
        raise SingularY("Y is not invertible to tolerance")
    return NetworkModel(
        n_buses=n_buses,
        lines=tuple(lines),
        v0=complex(v0),
        y0=complex(full[0, 0]),
        ybar=full[1:, 0].copy(),
        Y=Y,
        base_mva=float(base_mva),
        base_kv=float(base_kv),
    )


def load_network(path: str | Path) -> NetworkModel:
    """Read the network JSON file format.

    ``{base_mva, base_kv, v0: {mag, angle_deg}, buses: [id], lines: [{from, to,
    r_pu, x_pu, b_shunt_pu}]}`` with bus 0 the substation.
    """
    with open(path) as fh:
        data = json.load(fh)
    return network_from_dict(data)


def network_from_dict(data: dict) -> NetworkModel:
    buses = sorted(int(b) for b in data["buses"])
    if buses != list(range(len(buses))):
        raise DisconnectedNetwork("bus ids must be 0..N with 0 the substation")
    v0_spec = data.get("v0", {})
    v0 = float(v0_spec.get("mag", 1.0)) * np.exp(1j * np.deg2rad(float(v0_spec.get("angle_deg", 0.0))))
    lines = [
        Line(int(ln["from"]), int(ln["to"]), float(ln["r_pu"]), float(ln["x_pu"]), float(ln.get("b_shunt_pu", 0.0)))
        for ln in data["lines"]
    ]
    return build_admittance(
        lines,
        len(buses),
        v0=v0,
        base_mva=float(data.get("base_mva", 1.0)),
        base_kv=float(data.get("base_kv", 20.0)),
    )


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    v: np.ndarray
    s0: complex
    iterations: int
    residual: float
    s_net: np.ndarray = field(repr=False)

    @property
    def nu(self) -> np.ndarray:
        return np.abs(self.v)

    @property
    def losses(self) -> float:
        """Active losses from the power balance ``Re(s0) + sum Re(s_net)``."""
        return float(self.s0.real + self.s_net.real.sum())


def pf_mismatch(model: NetworkModel, v: np.ndarray, s_net: np.ndarray) -> np.ndarray:
    return s_net - v * np.conj(model._source_current + model.Y @ v)


def solve_power_flow(
    model: NetworkModel,
    s_net: np.ndarray,
    warm_start: np.ndarray | None = None,
    tol: float = TOL_PF,
    max_iter: int = MAX_ITER_PF,
) -> PowerFlowSolution:
    """Z-bus fixed point ``v <- Y^{-1}(conj(s / v) - ybar v0)``.

    Seeded at the nominal profile this converges to the high-voltage
    (practical) solution.
    """
    s_net = np.asarray(s_net, dtype=complex)
    if s_net.shape != (model.n,):
        raise DimensionMismatch(f"s_net has shape {s_net.shape}, expected ({model.n},)")
    if not np.all(np.isfinite(s_net)):
        raise ValueError("s_net must be finite")
    Z, vbar, Y, src = model.Z, model.vbar, model.Y, model._source_current
    v = vbar.copy() if warm_start is None else np.array(warm_start, dtype=complex)
    s_conj = np.conj(s_net)
    residual = np.inf
    for it in range(1, max_iter + 1):
        v = Z @ (s_conj / np.conj(v)) + vbar
        mismatch = s_net - v * np.conj(src + Y @ v)
        residual = float(np.max(np.abs(mismatch)))
        if not np.isfinite(residual):
            break
        if residual <= tol:
            s0 = model.v0 * np.conj(model.y0 * model.v0 + model.ybar @ v)
            return PowerFlowSolution(v=v, s0=complex(s0), iterations=it, residual=residual, s_net=s_net)
    raise PowerFlowDiverged(
        f"power flow did not reach residual {tol:g} in {max_iter} iterations (last {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


def magnitude_sensitivities(model: NetworkModel, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``d|v|/dp`` and ``d|v|/dq`` (N x N) at a power-flow solution.

    Implicit differentiation of ``s = diag(v) conj(ybar v0 + Y v)``, solved as
    a real 2N system since the map is not complex-analytic in ``v``.
    """
    n = model.n
    i_conj = np.conj(model._source_current + model.Y @ v)
    B = v[:, None] * np.conj(model.Y)
    Ar, Ai = np.diag(i_conj.real), np.diag(i_conj.imag)
    Br, Bi = B.real, B.imag
    K = np.block([[Ar + Br, -Ai + Bi], [Ai + Bi, Ar - Br]])
    rhs = np.zeros((2 * n, 2 * n))
    rhs[:n, :n] = np.eye(n)  # ds = e_k (active)
    rhs[n:, n:] = np.eye(n)  # ds = j e_k (reactive)
    dx = np.linalg.solve(K, rhs)
    dvr, dvi = dx[:n], dx[n:]
    mag = np.abs(v)
    dnu = (v.real[:, None] * dvr + v.imag[:, None] * dvi) / mag[:, None]
    return dnu[:, :n], dnu[:, n:]


@dataclass(frozen=True, eq=False)
class LinearVoltageModel:
    vbar: np.ndarray
    rho_bar: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray
    R_bar: np.ndarray
    B_bar: np.ndarray
    Gamma_R: np.ndarray
    Gamma_B: np.ndarray
    monitored: np.ndarray  # bus ids (1-based)
    J_hat: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        return self.monitored - 1

    @property
    def n_ders(self) -> int:
        return self.Gamma_R.shape[1] // 2


def der_incidence(n: int, der_nodes: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """0/1 maps ``Gamma_R, Gamma_B`` from ``u = [p_1..p_G, q_1..q_G]`` to nodal injections."""
    g = len(der_nodes)
    Gamma_R = np.zeros((n, 2 * g))
    Gamma_B = np.zeros((n, 2 * g))
    for i, node in enumerate(der_nodes):
        if not 1 <= node <= n:
            raise DimensionMismatch(f"DER {i} sits at bus {node}, outside 1..{n}")
        Gamma_R[node - 1, i] = 1.0
        Gamma_B[node - 1, g + i] = 1.0
    return Gamma_R, Gamma_B


def build_linear_model(
    model: NetworkModel, der_nodes: Sequence[int], monitored: Iterable[int] | None = None
) -> LinearVoltageModel:
    """Linearize around ``vbar = -Y^{-1} ybar v0``.

    ``der_nodes`` is the DER-to-bus map; ``monitored`` the regulated bus ids
    (defaults to every PQ bus).
    """
    n = model.n
    monitored = np.arange(1, n + 1) if monitored is None else np.array(sorted(set(int(m) for m in monitored)))
    if monitored.size == 0 or monitored.min() < 1 or monitored.max() > n:
        raise DimensionMismatch("monitored set must be a nonempty subset of 1..N")
    try:
        Z = model.Z
    except np.linalg.LinAlgError as exc:
        raise SingularY(str(exc)) from exc
    vbar = model.vbar
    rho = np.abs(vbar)
    theta = np.angle(vbar)
    a, b = np.cos(theta), np.sin(theta)
    ZR, ZI = Z.real, Z.imag
    R_bar = ZR * (a / rho) - ZI * (b / rho)
    B_bar = ZI * (a / rho) + ZR * (b / rho)
    Gamma_R, Gamma_B = der_incidence(n, der_nodes)
    J_full = R_bar @ Gamma_R + B_bar @ Gamma_B
    return LinearVoltageModel(
        vbar=vbar,
        rho_bar=rho,
        a_bar=a,
        b_bar=b,
        R_bar=R_bar,
        B_bar=B_bar,
        Gamma_R=Gamma_R,
        Gamma_B=Gamma_B,
        monitored=monitored,
        J_hat=J_full[monitored - 1],
    )


def net_injections(lin: LinearVoltageModel, u, p_l, q_l) -> np.ndarray:
    """Complex nodal injections ``(Gamma_R u - p_l) + j (Gamma_B u - q_l)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (lin.Gamma_R.shape[1],):
        raise DimensionMismatch(f"u has shape {u.shape}, expected ({lin.Gamma_R.shape[1]},)")
    p_l = np.asarray(p_l, dtype=float)
    q_l = np.asarray(q_l, dtype=float)
    if p_l.shape != lin.rho_bar.shape or q_l.shape != lin.rho_bar.shape:
        raise DimensionMismatch("load vectors must have one entry per PQ bus")
    return (lin.Gamma_R @ u - p_l) + 1j * (lin.Gamma_B @ u - q_l)


def predict_voltages(lin: LinearVoltageModel, u, p_l, q_l) -> np.ndarray:
    """Linear voltage magnitudes at the monitored buses."""
    s = net_injections(lin, u, p_l, q_l)
    nu = lin.R_bar @ s.real + lin.B_bar @ s.imag + lin.rho_bar
    return nu[lin.rows]


def true_voltages(model, lin, u, p_l, q_l, warm_start=None, tol: float = TOL_PF) -> tuple[np.ndarray, PowerFlowSolution]:
    pf = solve_power_flow(model, net_injections(lin, u, p_l, q_l), warm_start=warm_start, tol=tol)
    return pf.nu[lin.rows], pf


def exact_jacobian(model: NetworkModel, lin: LinearVoltageModel, pf: PowerFlowSolution) -> np.ndarray:
    """``J_H`` (M x 2G) at a converged power flow, by implicit differentiation."""
    dp, dq = magnitude_sensitivities(model, pf.v)
    return (dp @ lin.Gamma_R + dq @ lin.Gamma_B)[lin.rows]


def fd_jacobian(model, lin, u, p_l, q_l, step: float = FD_STEP, tol: float = TOL_PF) -> np.ndarray:
    """Central finite-difference ``J_H`` through the nonlinear power flow.

    The truncation error is O(step^2); power-flow noise adds about
    ``tol / step``, so tighten ``tol`` for derivative checks.
    """
    u = np.asarray(u, dtype=float)
    _, base = true_voltages(model, lin, u, p_l, q_l, tol=tol)
    J = np.empty((lin.monitored.size, u.size))
    for k in range(u.size):
        e = np.zeros_like(u)
        e[k] = step
        up, _ = true_voltages(model, lin, u + e, p_l, q_l, warm_start=base.v, tol=tol)
        dn, _ = true_voltages(model, lin, u - e, p_l, q_l, warm_start=base.v, tol=tol)
        J[:, k] = (up - dn) / (2 * step)
    return J


@dataclass(frozen=True)
class ModelErrorReport:
    e_hat: float  # max |H_hat - H| over samples (inf-norm, pu)
    e_jac: float  # max spectral norm of J_hat - J_H over samples
    n_samples: int


def model_error_sweep(model, lin, u_samples, loads) -> ModelErrorReport:
    """Worst linear-model and Jacobian error over setpoint samples x load cases.

    ``loads`` is an iterable of ``(p_l, q_l)`` pairs.
    """
    e_hat = 0.0
    e_jac = 0.0
    count = 0
    for p_l, q_l in loads:
        warm = None
        for u in u_samples:
            nu, pf = true_voltages(model, lin, u, p_l, q_l, warm_start=warm)
            warm = pf.v
            e_hat = max(e_hat, float(np.max(np.abs(predict_voltages(lin, u, p_l, q_l) - nu))))
            e_jac = max(e_jac, float(np.linalg.norm(lin.J_hat - exact_jacobian(model, lin, pf), 2)))
            count += 1
    return ModelErrorReport(e_hat=e_hat, e_jac=e_jac, n_samples=count)
