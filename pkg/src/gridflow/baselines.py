"""Comparison controllers: Volt/Var droop, no-control with overvoltage
protection, a regularized online primal-dual method, and the batch reference
obtained by running the error-free safe flow to convergence."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .netmodel import LinearVoltageModel, NetworkModel, exact_jacobian, fd_jacobian, net_injections, solve_power_flow
from .opf import KktReport, OpfProblem, cost_gradient, kkt_residual
from .sgf import SgfConfig, sgf_direction

# --------------------------------------------------------------------------
# Volt/Var


@dataclass(frozen=True)
class VoltVarCurve:
    v_points: tuple[float, ...] = (0.95, 0.99, 1.01, 1.05)
    q_frac_points: tuple[float, ...] = (0.44, 0.0, 0.0, -0.44)

    def __post_init__(self):
        if len(self.v_points) != len(self.q_frac_points):
            raise ValueError("curve needs one q fraction per voltage point")
        if np.any(np.diff(self.v_points) <= 0):
            raise ValueError("v_points must be strictly increasing")
        if np.any(np.diff(self.q_frac_points) > 0):
            raise ValueError("Volt/Var curve must be non-increasing")


def voltvar_q(curve: VoltVarCurve, v_measured, s_n):
    """Reactive setpoint from the piecewise-linear droop, saturated outside the breakpoints."""
    v = np.asarray(v_measured, dtype=float)
    if np.any(v <= 0):
        raise ValueError("measured voltage must be positive")
    q = np.asarray(s_n, dtype=float) * np.interp(v, curve.v_points, curve.q_frac_points)
    return float(q) if q.ndim == 0 else q


def voltvar_setpoints(curve: VoltVarCurve, v_at_der, s_n, p_max) -> np.ndarray:
    """Full ``u`` for Volt/Var: curve reactive power, active power with reactive priority."""
    q = np.atleast_1d(voltvar_q(curve, v_at_der, s_n))
    p = np.minimum(p_max, np.sqrt(np.maximum(np.asarray(s_n) ** 2 - q**2, 0.0)))
    return np.concatenate([p, q])


# --------------------------------------------------------------------------
# No control: overvoltage protection

RUNNING, IDLING, DISCONNECTED = "running", "idling", "disconnected"
ALLOWED_TRANSITIONS = {(RUNNING, DISCONNECTED), (DISCONNECTED, IDLING), (IDLING, RUNNING)}


@dataclass(frozen=True)
class ProtectionSettings:
    v_trip: float = 1.06
    v_rms_trip: float = 1.05
    window_samples: int = 60  # 10 min of 10 s samples
    v_release: float = 1.05
    release_samples: int = 6  # 1 min below v_release
    reconnect_delay_s: tuple[float, float] = (60.0, 600.0)


@dataclass(frozen=True, eq=False)
class ProtectionState:
    status: tuple[str, ...]
    window: np.ndarray  # (G, <= window_samples) most recent samples last
    below_count: np.ndarray
    reconnect_at: np.ndarray
    settings: ProtectionSettings = field(default_factory=ProtectionSettings)
    events: tuple[tuple[float, int, str, str], ...] = ()

    @classmethod
    def initial(cls, n_ders: int, settings: ProtectionSettings | None = None) -> "ProtectionState":
        return cls(
            status=(RUNNING,) * n_ders,
            window=np.zeros((n_ders, 0)),
            below_count=np.zeros(n_ders, dtype=int),
            reconnect_at=np.full(n_ders, np.inf),
            settings=settings or ProtectionSettings(),
        )

    @property
    def injecting(self) -> np.ndarray:
        return np.array([s == RUNNING for s in self.status])


def protection_step(state: ProtectionState, v_at_poc, now: float, rng: np.random.Generator) -> ProtectionState:
    """Advance every DER's protection automaton by one 10 s sample."""
    cfg = state.settings
    v = np.asarray(v_at_poc, dtype=float)
    window = np.concatenate([state.window, v[:, None]], axis=1)[:, -cfg.window_samples :]
    full = window.shape[1] >= cfg.window_samples
    rms = np.sqrt(np.mean(window**2, axis=1))
    status = list(state.status)
    below = state.below_count.copy()
    reconnect_at = state.reconnect_at.copy()
    events = list(state.events)
    for i, st in enumerate(state.status):
        new = st
        if st == RUNNING:
            if v[i] > cfg.v_trip or (full and rms[i] > cfg.v_rms_trip):
                new = DISCONNECTED
                below[i] = 0
        elif st == DISCONNECTED:
            below[i] = below[i] + 1 if v[i] < cfg.v_release else 0
            if below[i] >= cfg.release_samples:
                new = IDLING
                reconnect_at[i] = now + rng.uniform(*cfg.reconnect_delay_s)
        elif st == IDLING:
            if now >= reconnect_at[i]:
                new = RUNNING
                reconnect_at[i] = np.inf
        if new != st:
            events.append((float(now), i, st, new))
            status[i] = new
    return replace(state, status=tuple(status), window=window, below_count=below, reconnect_at=reconnect_at, events=tuple(events))


def no_control_setpoints(state: ProtectionState, p_max) -> np.ndarray:
    p = np.where(state.injecting, p_max, 0.0)
    return np.concatenate([p, np.zeros_like(p)])


# --------------------------------------------------------------------------
# Online primal-dual


@dataclass(frozen=True, eq=False)
class PrimalDualState:
    u: np.ndarray
    mu_upper: np.ndarray
    mu_lower: np.ndarray
    alpha: float = 0.05
    alpha_dual: float = 50.0
    eps: float = 1e-3

    def __post_init__(self):
        if self.alpha <= 0 or self.alpha_dual <= 0:
            raise ValueError("step sizes must be positive")


def _project_disk_box(x, s_n, lo, hi) -> np.ndarray:
    """Nearest point of ``{|y| <= s_n, lo <= y <= hi}`` to the 2-vector ``x``.

    The minimizer is ``x`` itself, its radial image on the arc, or the foot of
    the perpendicular on one box edge clipped to the part of that edge inside
    the disk (which also covers every vertex).
    """

    def admissible(y):
        return y @ y <= s_n * s_n * (1 + 1e-12) and np.all(y >= lo - 1e-12) and np.all(y <= hi + 1e-12)

    if admissible(x):
        return x
    r = np.hypot(x[0], x[1])
    cands = [x * (s_n / r)] if r > 0 else []
    for axis in (0, 1):
        other = 1 - axis
        for level in (lo[axis], hi[axis]):
            if abs(level) > s_n:
                continue
            w = np.sqrt(s_n * s_n - level * level)
            a, b = max(lo[other], -w), min(hi[other], w)
            if a > b:
                continue
            y = np.empty(2)
            y[axis], y[other] = level, min(max(x[other], a), b)
            cands.append(y)
    cands = [c for c in cands if admissible(c)]
    return min(cands, key=lambda c: (c[0] - x[0]) ** 2 + (c[1] - x[1]) ** 2)


def project_capability(problem: OpfProblem, u) -> np.ndarray:
    """Euclidean projection of every DER's ``(p, q)`` onto disk, [0, p_max] and the q-band."""
    f = problem.fleet
    g = f.s_n.size
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    for i in range(g):
        qlim = f.q_frac[i] * f.s_n[i]
        y = _project_disk_box(
            np.array([u[i], u[g + i]]), f.s_n[i], np.array([0.0, -qlim]), np.array([f.p_max[i], qlim])
        )
        out[i], out[g + i] = y
    return out


def primal_dual_step(
    state: PrimalDualState,
    nu_measured,
    lin: LinearVoltageModel,
    problem: OpfProblem,
    dt: float = 1.0,
) -> PrimalDualState:
    """Regularized projected primal-dual update on the linear voltage model."""
    nu = np.asarray(nu_measured, dtype=float)
    ad = state.alpha_dual * dt
    mu_u = np.maximum(0.0, state.mu_upper + ad * (nu - problem.v_upper)) / (1.0 + ad * state.eps)
    mu_l = np.maximum(0.0, state.mu_lower + ad * (problem.v_lower - nu)) / (1.0 + ad * state.eps)
    grad = cost_gradient(problem, state.u) + lin.J_hat.T @ (mu_u - mu_l)
    u = project_capability(problem, state.u - state.alpha * dt * grad)
    return replace(state, u=u, mu_upper=mu_u, mu_lower=mu_l)


# --------------------------------------------------------------------------
# Batch reference


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BatchResult:
    u: np.ndarray
    nu: np.ndarray
    duals: np.ndarray
    kkt: KktReport
    iterations: int
    direction_norm: float
    v: np.ndarray


BATCH_CONFIG = SgfConfig(beta=2.5, eta=1.0, dt=0.2)


def batch_reference(
    problem: OpfProblem,
    model: NetworkModel,
    lin: LinearVoltageModel,
    p_l,
    q_l,
    u0,
    config: SgfConfig = BATCH_CONFIG,
    tol: float = 1e-8,
    max_iter: int = 20000,
    jacobian: str = "exact",
    warm_v: np.ndarray | None = None,
) -> BatchResult:
    """Reference OPF solution: error-free safe flow iterated until ``||F|| <= tol``.

    Voltages come from the nonlinear power flow and ``J_H`` from implicit
    differentiation (``jacobian="exact"``) or central differences (``"fd"``).
    The limit is a KKT point of the nonlinear OPF; certified with the QP
    multipliers.
    """
    u = np.array(u0, dtype=float)
    h = config.eta * config.dt
    v = warm_v
    for it in range(max_iter + 1):
        pf = solve_power_flow(model, net_injections(lin, u, p_l, q_l), warm_start=v)
        v = pf.v
        nu = pf.nu[lin.rows]
        J = exact_jacobian(model, lin, pf) if jacobian == "exact" else fd_jacobian(model, lin, u, p_l, q_l)
        direction, duals = sgf_direction(problem, lin, u, nu, config, jacobian=J)
        norm = float(np.linalg.norm(direction))
        if norm <= tol:
            kkt = kkt_residual(problem, lin, u, nu, duals / 2.0, jacobian=J)
            return BatchResult(u=u, nu=nu, duals=duals / 2.0, kkt=kkt, iterations=it, direction_norm=norm, v=v)
        u = u + h * direction
    raise NoConvergence(f"batch reference did not converge in {max_iter} iterations (|F| = {norm:.3e})")
