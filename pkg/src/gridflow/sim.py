"""Closed-loop time-series simulation.

Each 1 s control tick: hold loads from the scenario grid, solve the nonlinear
power flow at the implemented setpoints, form noisy (or pseudo) voltage
measurements, step the selected controller, and record metrics. Metrics on
the scenario grid (10 s) are derived from the per-tick records.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import (
    BATCH_CONFIG,
    NoConvergence,
    PrimalDualState,
    ProtectionSettings,
    ProtectionState,
    VoltVarCurve,
    batch_reference,
    no_control_setpoints,
    primal_dual_step,
    protection_step,
    voltvar_setpoints,
)
from .netmodel import (
    LinearVoltageModel,
    NetworkModel,
    PowerFlowDiverged,
    PowerFlowSolution,
    build_linear_model,
    exact_jacobian,
    net_injections,
    solve_power_flow,
)
from .opf import DerFleet, OpfProblem, capability_values, eval_cost
from .sgf import ControllerState, QpInfeasible, SgfConfig, sgf_direction

log = logging.getLogger(__name__)

CONTROLLERS = ("sgf", "pdm", "vvc", "nc", "bo")
QP_OK, QP_INFEASIBLE, QP_NONE = 0, 1, -1
CLAMP_TOL = 1e-6
OV_COUNT_TOL = 1e-9  # float noise at an active voltage limit is not an excursion


class SimulationAborted(RuntimeError):
    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


# --------------------------------------------------------------------------
# scenario


@dataclass(frozen=True, eq=False)
class ScenarioTimeSeries:
    period_s: float
    p_l: np.ndarray  # (T, N) consumption-positive
    q_l: np.ndarray  # (T, N)
    p_max: np.ndarray  # (T, G)

    def __post_init__(self):
        for name in ("p_l", "q_l", "p_max"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        if not (self.p_l.shape[0] == self.q_l.shape[0] == self.p_max.shape[0]):
            raise ValueError("scenario traces must have equal length")
        if self.p_l.shape != self.q_l.shape:
            raise ValueError("p_l and q_l must have the same shape")
        if self.period_s <= 0:
            raise ValueError("sample period must be positive")

    @property
    def n_samples(self) -> int:
        return self.p_l.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_samples * self.period_s

    @classmethod
    def static(cls, p_l, q_l, p_max, duration_s: float, period_s: float = 10.0) -> "ScenarioTimeSeries":
        n = int(round(duration_s / period_s))
        return cls(period_s, np.tile(p_l, (n, 1)), np.tile(q_l, (n, 1)), np.tile(p_max, (n, 1)))

    def segment(self, start_s: float, stop_s: float) -> "ScenarioTimeSeries":
        a, b = int(start_s // self.period_s), int(np.ceil(stop_s / self.period_s))
        return ScenarioTimeSeries(self.period_s, self.p_l[a:b], self.q_l[a:b], self.p_max[a:b])

    def issues(self, n_buses: int, fleet: DerFleet) -> list[str]:
        """Consistency problems against a network and fleet (empty when clean)."""
        out = []
        if self.p_l.shape[1] != n_buses - 1:
            out.append(f"load traces cover {self.p_l.shape[1]} buses, network has {n_buses - 1}")
        if self.p_max.shape[1] != len(fleet):
            out.append(f"p_max traces cover {self.p_max.shape[1]} DERs, fleet has {len(fleet)}")
            return out
        for name in ("p_l", "q_l", "p_max"):
            bad = np.argwhere(~np.isfinite(getattr(self, name)))
            if bad.size:
                out.append(f"{name} has non-finite values at sample {int(bad[0, 0])}")
        over = np.argwhere(self.p_max > fleet.s_n * (1 + 1e-9))
        for row, der in over[:20]:
            out.append(f"p_max exceeds s_n at sample {int(row)} (t_s={row * self.period_s:g}) for der {int(der)}")
        if len(over) > 20:
            out.append(f"... {len(over) - 20} more p_max > s_n rows")
        neg = np.argwhere(self.p_max < 0)
        for row, der in neg[:20]:
            out.append(f"p_max negative at sample {int(row)} for der {int(der)}")
        return out


def write_scenario_csv(scenario: ScenarioTimeSeries, loads_path, pmax_path) -> None:
    """Write ``t_s,node,p_l_pu,q_l_pu`` and ``t_s,der,p_max_pu`` files."""
    with open(loads_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "node", "p_l_pu", "q_l_pu"])
        for k in range(scenario.n_samples):
            t = _fmt(k * scenario.period_s)
            for n in range(scenario.p_l.shape[1]):
                w.writerow([t, n + 1, repr(float(scenario.p_l[k, n])), repr(float(scenario.q_l[k, n]))])
    with open(pmax_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "der", "p_max_pu"])
        for k in range(scenario.n_samples):
            t = _fmt(k * scenario.period_s)
            for i in range(scenario.p_max.shape[1]):
                w.writerow([t, i, repr(float(scenario.p_max[k, i]))])


def read_scenario_csv(loads_path, pmax_path) -> ScenarioTimeSeries:
    """Read the two scenario CSV files; buses are 1-based, DERs 0-based in fleet order."""
    loads = _read_rows(loads_path, ("t_s", "node", "p_l_pu", "q_l_pu"))
    pmax = _read_rows(pmax_path, ("t_s", "der", "p_max_pu"))
    times = sorted({r[0] for r in loads})
    if sorted({r[0] for r in pmax}) != times:
        raise ValueError("load and p_max files must share the same time grid")
    if len(times) < 1:
        raise ValueError("scenario has no samples")
    period = times[1] - times[0] if len(times) > 1 else 10.0
    if np.any(np.abs(np.diff(times) - period) > 1e-9):
        raise ValueError("scenario time grid must be uniform")
    t_index = {t: k for k, t in enumerate(times)}
    n_nodes = int(max(r[1] for r in loads))
    n_ders = int(max(r[1] for r in pmax)) + 1
    p_l = np.full((len(times), n_nodes), np.nan)
    q_l = np.full((len(times), n_nodes), np.nan)
    p_max = np.full((len(times), n_ders), np.nan)
    for t, node, p, q in loads:
        p_l[t_index[t], int(node) - 1] = p
        q_l[t_index[t], int(node) - 1] = q
    for t, der, pm in pmax:
        p_max[t_index[t], int(der)] = pm
    if np.isnan(p_l).any() or np.isnan(p_max).any():
        raise ValueError("scenario files leave some (time, node/der) entries undefined")
    return ScenarioTimeSeries(float(period), p_l, q_l, p_max)


def _read_rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != list(header):
            raise ValueError(f"{path}: expected header {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append(tuple(float(c) for c in row))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
        return rows


def _fmt(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


# --------------------------------------------------------------------------
# measurements


@dataclass(frozen=True)
class MeasurementModel:
    noise_bound: float = 0.0  # uniform on [-bound, bound] per bus, pu
    pseudo_nodes: tuple[int, ...] = ()  # bus ids replaced by linear-model estimates

    def __post_init__(self):
        if self.noise_bound < 0:
            raise ValueError("noise bound must be nonnegative")

    def measure(self, nu_true, lin, u, p_l, q_l, rng) -> np.ndarray:
        """Measured magnitudes at every PQ bus."""
        nu = np.array(nu_true, dtype=float)
        if self.noise_bound > 0:
            nu = nu + rng.uniform(-self.noise_bound, self.noise_bound, size=nu.size)
        if self.pseudo_nodes:
            s = net_injections(lin, u, p_l, q_l)
            est = lin.R_bar @ s.real + lin.B_bar @ s.imag + lin.rho_bar
            idx = np.asarray(self.pseudo_nodes, dtype=int) - 1
            nu[idx] = est[idx]
        return nu


# --------------------------------------------------------------------------
# controllers


@dataclass(frozen=True)
class ControllerConfig:
    kind: str = "sgf"
    sgf: SgfConfig = field(default_factory=SgfConfig)
    exact_jacobian: bool = False
    pdm_alpha: float = 0.05
    pdm_alpha_dual: float = 50.0
    pdm_eps: float = 1e-3
    vvc_curve: VoltVarCurve = field(default_factory=VoltVarCurve)
    protection: ProtectionSettings = field(default_factory=ProtectionSettings)
    bo: SgfConfig = BATCH_CONFIG
    bo_jacobian: str = "exact"

    def __post_init__(self):
        if self.kind not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.kind!r}; choose from {', '.join(CONTROLLERS)}")


@dataclass
class _Context:
    model: NetworkModel
    lin: LinearVoltageModel
    lin_all: LinearVoltageModel
    problem: OpfProblem
    p_l: np.ndarray
    q_l: np.ndarray
    pf: PowerFlowSolution
    t: float
    new_sample: bool
    dt: float = 1.0


class _Controller:
    kind = ""

    def __init__(self, config: ControllerConfig, fleet: DerFleet, rng):
        self.config = config
        self.fleet = fleet
        self.rng = rng
        self.counters = {}

    def step(self, u_impl: np.ndarray, nu_meas: np.ndarray, ctx: _Context) -> tuple[np.ndarray, int]:
        raise NotImplementedError


class _SgfController(_Controller):
    kind = "sgf"

    def __init__(self, config, fleet, rng):
        super().__init__(config, fleet, rng)
        self.counters = {"qp_infeasible": 0}
        self.state = None

    def step(self, u_impl, nu_meas, ctx):
        cfg = self.config.sgf
        J = exact_jacobian(ctx.model, ctx.lin, ctx.pf) if self.config.exact_jacobian else None
        try:
            direction, duals = sgf_direction(ctx.problem, ctx.lin, u_impl, nu_meas[ctx.lin.rows], cfg, jacobian=J)
        except QpInfeasible:
            self.counters["qp_infeasible"] += 1
            return u_impl, QP_INFEASIBLE
        self.state = ControllerState(u=u_impl + cfg.dt * cfg.eta * direction, kind="sgf", duals=duals)
        return self.state.u, QP_OK


class _PdmController(_Controller):
    kind = "pdm"

    def __init__(self, config, fleet, rng):
        super().__init__(config, fleet, rng)
        self.state = None

    def step(self, u_impl, nu_meas, ctx):
        if self.state is None:
            m = ctx.lin.monitored.size
            self.state = PrimalDualState(
                u=u_impl.copy(), mu_upper=np.zeros(m), mu_lower=np.zeros(m),
                alpha=self.config.pdm_alpha, alpha_dual=self.config.pdm_alpha_dual, eps=self.config.pdm_eps,
            )
        self.state = primal_dual_step(self.state, nu_meas[ctx.lin.rows], ctx.lin, ctx.problem, dt=ctx.dt)
        return self.state.u, QP_NONE


class _VvcController(_Controller):
    kind = "vvc"

    def step(self, u_impl, nu_meas, ctx):
        f = ctx.problem.fleet
        return voltvar_setpoints(self.config.vvc_curve, nu_meas[f.nodes - 1], f.s_n, f.p_max), QP_NONE


class _NcController(_Controller):
    kind = "nc"

    def __init__(self, config, fleet, rng):
        super().__init__(config, fleet, rng)
        self.state = ProtectionState.initial(len(fleet), config.protection)
        self.counters = {"disconnections": 0}

    def step(self, u_impl, nu_meas, ctx):
        f = ctx.problem.fleet
        if ctx.new_sample:
            self.state = protection_step(self.state, nu_meas[f.nodes - 1], ctx.t, self.rng)
            self.counters["disconnections"] = sum(1 for e in self.state.events if e[3] == "disconnected")
        return no_control_setpoints(self.state, f.p_max), QP_NONE


class _BoController(_Controller):
    """Implements the batch OPF solution of each scenario sample for its whole duration."""

    kind = "bo"

    def __init__(self, config, fleet, rng):
        super().__init__(config, fleet, rng)
        self.counters = {"bo_failures": 0}
        self.u_star = None
        self.v_star = None

    def on_sample(self, u_cmd, model, lin, problem, p_l, q_l, t):
        u0 = u_cmd if self.u_star is None else self.u_star
        try:
            res = batch_reference(
                problem, model, lin, p_l, q_l, u0,
                config=self.config.bo, jacobian=self.config.bo_jacobian, warm_v=self.v_star,
            )
            self.u_star, self.v_star = res.u, res.v
        except (NoConvergence, QpInfeasible, PowerFlowDiverged) as exc:
            log.warning("batch reference failed at t=%s: %s", t, exc)
            self.counters["bo_failures"] += 1
            if self.u_star is None:
                self.u_star = np.array(u_cmd, dtype=float)
        return self.u_star

    def step(self, u_impl, nu_meas, ctx):
        return self.u_star, QP_NONE


_CONTROLLER_TYPES = {c.kind: c for c in (_SgfController, _PdmController, _VvcController, _NcController, _BoController)}


def clamp_to_capability(problem: OpfProblem, u) -> np.ndarray:
    """Nearest implementable setpoint: shrink into the disk, then clip to the box and q-band."""
    f = problem.fleet
    g = f.s_n.size
    p, q = np.array(u[:g], dtype=float), np.array(u[g:], dtype=float)
    r = np.hypot(p, q)
    scale = np.where(r > f.s_n, f.s_n / np.maximum(r, 1e-300), 1.0)
    p, q = p * scale, q * scale
    qlim = f.q_frac * f.s_n
    return np.concatenate([np.clip(p, 0.0, f.p_max), np.clip(q, -qlim, qlim)])


# --------------------------------------------------------------------------
# metrics


@dataclass(eq=False)
class SimulationMetrics:
    controller: str
    t: np.ndarray
    nu: np.ndarray  # (T, N) true magnitudes, every bus
    u: np.ndarray  # (T, 2G) implemented setpoints
    cost: np.ndarray
    losses: np.ndarray  # pu active power
    p0: np.ndarray
    q0: np.ndarray
    qp_status: np.ndarray
    monitored: np.ndarray
    v_upper: float
    v_lower: float
    sample_period_s: float
    base_mva: float
    dt: float = 1.0
    counters: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    @property
    def n_over(self) -> np.ndarray:
        return np.sum(self.nu[:, self.monitored - 1] > self.v_upper + OV_COUNT_TOL, axis=1)

    @property
    def cumulative_cost(self) -> np.ndarray:
        return np.cumsum(self.cost)

    @property
    def cumulative_losses_kwh(self) -> np.ndarray:
        return np.cumsum(self.losses) * self.dt * self.base_mva * 1000.0 / 3600.0

    @property
    def grid_index(self) -> np.ndarray:
        """Ticks that fall on the scenario sample grid."""
        step = int(round(self.sample_period_s / self.dt))
        return np.arange(0, self.t.size, step)

    def overvoltage_durations(self, alpha: float | None = None) -> tuple[float, float]:
        alpha = self.v_upper + OV_COUNT_TOL if alpha is None else alpha
        traces = self.nu[self.grid_index][:, self.monitored - 1]
        return compute_overvoltage_durations(traces, alpha)[:2]

    def summary(self) -> dict:
        mon = self.nu[:, self.monitored - 1]
        max_t, mean_t = self.overvoltage_durations()
        return {
            "controller": self.controller,
            "ticks": int(self.t.size),
            "max_voltage_pu": float(mon.max()),
            "min_voltage_pu": float(mon.min()),
            "overvoltage_samples": int(np.count_nonzero(self.n_over)),
            "overvoltage_node_samples": int(self.n_over.sum()),
            "undervoltage_samples": int(np.count_nonzero(np.any(mon < self.v_lower - OV_COUNT_TOL, axis=1))),
            "max_T_over_s": max_t * self.sample_period_s,
            "mean_T_over_s": mean_t * self.sample_period_s,
            "cumulative_cost": float(self.cost.sum()),
            "energy_losses_kwh": float(self.cumulative_losses_kwh[-1]) if self.t.size else 0.0,
            "pv_energy_kwh": float(self.u[:, : self.u.shape[1] // 2].sum() * self.dt * self.base_mva * 1000.0 / 3600.0),
            "reactive_energy_kvarh": float(np.abs(self.u[:, self.u.shape[1] // 2 :]).sum() * self.dt * self.base_mva * 1000.0 / 3600.0),
            "qp_infeasible": int(np.count_nonzero(self.qp_status == QP_INFEASIBLE)),
            **{k: v for k, v in self.counters.items() if k != "qp_infeasible"},
        }

    def write_steps_csv(self, path) -> None:
        n, g2 = self.nu.shape[1], self.u.shape[1]
        g = g2 // 2
        header = ["t_s"] + [f"v{k + 1}" for k in range(n)] + [f"der{i}_p" for i in range(g)] + [f"der{i}_q" for i in range(g)]
        header += ["cost", "losses_pu", "p0_pu", "q0_pu", "qp_status", "n_over"]
        n_over = self.n_over
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.t.size):
                w.writerow(
                    [_fmt(self.t[k])]
                    + [f"{x:.12g}" for x in self.nu[k]]
                    + [f"{x:.12g}" for x in self.u[k]]
                    + [f"{self.cost[k]:.12g}", f"{self.losses[k]:.12g}", f"{self.p0[k]:.12g}", f"{self.q0[k]:.12g}"]
                    + [int(self.qp_status[k]), int(n_over[k])]
                )

    def write_plot_data(self, path) -> None:
        """Plot-ready series on the scenario grid: max voltage, impacted nodes, cumulative cost/losses."""
        idx = self.grid_index
        mon = self.nu[:, self.monitored - 1]
        cum_cost, cum_loss = self.cumulative_cost, self.cumulative_losses_kwh
        n_over = self.n_over
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "max_voltage_pu", "n_over", "cumulative_cost", "cumulative_losses_kwh"])
            for k in idx:
                w.writerow([_fmt(self.t[k]), f"{mon[k].max():.12g}", int(n_over[k]), f"{cum_cost[k]:.12g}", f"{cum_loss[k]:.12g}"])


def read_steps_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(c) for c in row] for row in reader])
    return {name: data[:, k] for k, name in enumerate(header)}


def compute_overvoltage_durations(traces, alpha: float):
    """Run lengths (in samples) of consecutive values strictly above ``alpha``.

    Returns ``(max_T, mean_T, runs)``: the longest run over all buses, the
    largest per-bus mean run length, and the per-bus run lists.
    """
    x = np.atleast_2d(np.asarray(traces, dtype=float))
    if x.shape[0] == 1 and np.asarray(traces).ndim == 1:
        x = x.T
    above = x > alpha
    runs = []
    for col in above.T:
        padded = np.concatenate([[False], col, [False]]).astype(np.int8)
        d = np.diff(padded)
        starts, stops = np.flatnonzero(d == 1), np.flatnonzero(d == -1)
        runs.append((stops - starts).tolist())
    max_t = max((max(r) for r in runs if r), default=0)
    mean_t = max((float(np.mean(r)) for r in runs if r), default=0.0)
    return float(max_t), float(mean_t), runs


def compute_losses(pf: PowerFlowSolution, injections=None) -> float:
    """Active losses by power balance: substation injection plus all nodal injections."""
    s = pf.s_net if injections is None else np.asarray(injections, dtype=complex)
    return float(pf.s0.real + s.real.sum())


# --------------------------------------------------------------------------
# engine


def run_simulation(
    network: NetworkModel,
    fleet: DerFleet,
    scenario: ScenarioTimeSeries,
    controller: ControllerConfig,
    measurement: MeasurementModel = MeasurementModel(),
    seed: int = 0,
    v_lower: float = 0.95,
    v_upper: float = 1.05,
    monitored: Sequence[int] | None = None,
    u0=None,
    dt: float = 1.0,
    cv_weight: float = 0.0,
) -> SimulationMetrics:
    """Closed-loop run of one controller over a scenario; deterministic under ``seed``."""
    ticks_per_sample = scenario.period_s / dt
    if abs(ticks_per_sample - round(ticks_per_sample)) > 1e-9 or ticks_per_sample < 1:
        raise ValueError("control period must divide the scenario sample period")
    ticks_per_sample = int(round(ticks_per_sample))
    issues = scenario.issues(network.n_buses, fleet)
    if issues:
        raise ValueError("; ".join(issues))
    monitored = tuple(range(1, network.n + 1)) if monitored is None else tuple(sorted(monitored))
    lin = build_linear_model(network, fleet.nodes, monitored)
    lin_all = lin if len(monitored) == network.n else build_linear_model(network, fleet.nodes)
    base_problem = OpfProblem(fleet, v_lower=v_lower, v_upper=v_upper, monitored=monitored, cv_weight=cv_weight)

    seq = np.random.SeedSequence(seed)
    noise_rng, ctrl_rng = (np.random.default_rng(s) for s in seq.spawn(2))
    ctrl = _CONTROLLER_TYPES[controller.kind](controller, fleet, ctrl_rng)

    n_ticks = scenario.n_samples * ticks_per_sample
    n, g = network.n, len(fleet)
    rec_nu = np.empty((n_ticks, n))
    rec_u = np.empty((n_ticks, 2 * g))
    rec_cost = np.empty(n_ticks)
    rec_loss = np.empty(n_ticks)
    rec_p0 = np.empty(n_ticks)
    rec_q0 = np.empty(n_ticks)
    rec_qp = np.full(n_ticks, QP_NONE, dtype=np.int8)
    clamp_avail = clamp_cap = 0

    if u0 is None:
        u_cmd = np.zeros(2 * g)
        if controller.kind in ("vvc", "nc"):
            u_cmd[:g] = scenario.p_max[0]
    else:
        u_cmd = np.array(u0, dtype=float)
    v_prev = None
    problem = base_problem
    for tick in range(n_ticks):
        k, r = divmod(tick, ticks_per_sample)
        t = tick * dt
        if r == 0:
            problem = base_problem.with_p_max(scenario.p_max[k])
            p_l, q_l = scenario.p_l[k], scenario.q_l[k]
            if isinstance(ctrl, _BoController):
                u_cmd = ctrl.on_sample(u_cmd, network, lin, problem, p_l, q_l, t)
        u_impl = clamp_to_capability(problem, u_cmd)
        gap = np.abs(u_impl - u_cmd)
        if gap.max() > CLAMP_TOL:
            # only p above the (falling) available power is a physical clip, the rest is a capability breach
            avail_only = np.all(gap[g:] <= CLAMP_TOL) and np.all(capability_values(problem, u_cmd).reshape(g, 5)[:, [0, 2, 3, 4]] <= CLAMP_TOL)
            if avail_only:
                clamp_avail += 1
            else:
                clamp_cap += 1
        try:
            pf = solve_power_flow(network, net_injections(lin, u_impl, p_l, q_l), warm_start=v_prev)
        except PowerFlowDiverged as exc:
            raise SimulationAborted(
                f"power flow diverged at t={t:g}s: {exc}", {"t": t, "u": u_impl, "p_l": p_l, "q_l": q_l}
            ) from exc
        v_prev = pf.v
        nu = pf.nu
        nu_meas = measurement.measure(nu, lin_all, u_impl, p_l, q_l, noise_rng)
        ctx = _Context(network, lin, lin_all, problem, p_l, q_l, pf, t, r == 0, dt)
        u_cmd, status = ctrl.step(u_impl, nu_meas, ctx)
        rec_nu[tick] = nu
        rec_u[tick] = u_impl
        rec_cost[tick] = eval_cost(problem, u_impl)
        rec_loss[tick] = pf.losses
        rec_p0[tick] = pf.s0.real
        rec_q0[tick] = pf.s0.imag
        rec_qp[tick] = status

    counters = dict(ctrl.counters)
    counters["clamp_availability"] = clamp_avail
    counters["clamp_capability"] = clamp_cap
    events = list(ctrl.state.events) if controller.kind == "nc" else []
    return SimulationMetrics(
        controller=controller.kind,
        t=np.arange(n_ticks) * dt,
        nu=rec_nu,
        u=rec_u,
        cost=rec_cost,
        losses=rec_loss,
        p0=rec_p0,
        q0=rec_q0,
        qp_status=rec_qp,
        monitored=np.array(monitored, dtype=int),
        v_upper=v_upper,
        v_lower=v_lower,
        sample_period_s=scenario.period_s,
        base_mva=network.base_mva,
        dt=dt,
        counters=counters,
        events=events,
    )


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
