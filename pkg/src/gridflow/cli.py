"""Command-line front end.

Subcommands
-----------
run       one closed-loop simulation; writes steps CSV, summary JSON, plot data
compare   the five controllers on the same scenario, side by side
validate  network, linear-model error and scenario consistency checks
sweep     SGF over a grid of beta, eta and noise bounds
scenario  export the bundled synthetic day as scenario CSV files

Exit codes: 0 ok, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assets import bundled_fleet, bundled_network, data_path, synthetic_summer_day
from .baselines import NoConvergence
from .netmodel import (
    NetworkError,
    NetworkModel,
    PowerFlowDiverged,
    build_linear_model,
    load_network,
    model_error_sweep,
)
from .opf import DerFleet, OpfProblem, load_fleet
from .qp import MaxIterExceeded, QP_MAX_ITER, TOL_QP
from .sgf import SgfConfig
from .sim import (
    CONTROLLERS,
    ControllerConfig,
    MeasurementModel,
    ScenarioTimeSeries,
    SimulationAborted,
    clamp_to_capability,
    read_scenario_csv,
    run_simulation,
    write_scenario_csv,
    write_summary_json,
)

log = logging.getLogger("gridflow")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

SUMMARY_COLUMNS = (
    "controller",
    "max_voltage_pu",
    "overvoltage_samples",
    "max_T_over_s",
    "mean_T_over_s",
    "cumulative_cost",
    "energy_losses_kwh",
    "disconnections",
    "runtime_s",
)


class ConfigError(Exception):
    """Invalid user input; the message names the offending field or path."""


@dataclass(frozen=True)
class RunConfig:
    network_path: Path | None = None
    fleet_path: Path | None = None
    loads_path: Path | None = None
    pmax_path: Path | None = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    v_lower: float = 0.95
    v_upper: float = 1.05
    measurement: MeasurementModel = field(default_factory=MeasurementModel)
    seed: int = 0
    dt: float = 1.0
    start_s: float | None = None
    stop_s: float | None = None
    out_dir: Path = Path("gridflow-out")

    def __post_init__(self):
        if not self.v_lower < self.v_upper:
            raise ConfigError(f"v_lower ({self.v_lower}) must be below v_upper ({self.v_upper})")


@dataclass(frozen=True, eq=False)
class Inputs:
    network: NetworkModel
    fleet: DerFleet
    scenario: ScenarioTimeSeries


def _existing(path: Path | None, name: str) -> Path | None:
    if path is not None and not Path(path).is_file():
        raise ConfigError(f"{name}: file not found: {path}")
    return path


def load_inputs(cfg: RunConfig) -> Inputs:
    """Read network, fleet and scenario, falling back to the bundled assets."""
    net_path = _existing(cfg.network_path, "network")
    fleet_path = _existing(cfg.fleet_path, "fleet")
    if (cfg.loads_path is None) != (cfg.pmax_path is None):
        raise ConfigError("scenario: give both --loads and --pmax, or neither")
    loads_path = _existing(cfg.loads_path, "loads")
    pmax_path = _existing(cfg.pmax_path, "pmax")
    try:
        network = load_network(net_path) if net_path else bundled_network()
    except NetworkError:
        raise
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"network: cannot parse {net_path}: {exc}") from exc
    try:
        fleet = load_fleet(fleet_path, network.base_mva) if fleet_path else bundled_fleet(network)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"fleet: cannot parse {fleet_path or data_path('fleet12.json')}: {exc}") from exc
    bad = [int(n) for n in fleet.nodes if not 1 <= n <= network.n]
    if bad:
        raise ConfigError(f"fleet: DER nodes {bad} are not PQ buses of the network")
    if loads_path:
        try:
            scenario = read_scenario_csv(loads_path, pmax_path)
        except (ValueError, OSError) as exc:
            raise ConfigError(f"scenario: {exc}") from exc
    else:
        scenario = synthetic_summer_day(network, fleet)
    if cfg.start_s is not None or cfg.stop_s is not None:
        start = cfg.start_s or 0.0
        stop = scenario.duration_s if cfg.stop_s is None else cfg.stop_s
        if not 0 <= start < stop <= scenario.duration_s:
            raise ConfigError(f"start_s/stop_s: window [{start}, {stop}] outside scenario [0, {scenario.duration_s}]")
        scenario = scenario.segment(start, stop)
    return Inputs(network, fleet, scenario)


def simulate(cfg: RunConfig, inputs: Inputs):
    return run_simulation(
        inputs.network,
        inputs.fleet,
        inputs.scenario,
        cfg.controller,
        cfg.measurement,
        seed=cfg.seed,
        v_lower=cfg.v_lower,
        v_upper=cfg.v_upper,
        dt=cfg.dt,
    )


def write_run_artifacts(metrics, out_dir: Path, extra: dict | None = None) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = metrics.summary()
    summary.update(extra or {})
    metrics.write_steps_csv(out_dir / "steps.csv")
    metrics.write_plot_data(out_dir / "plot_data.csv")
    write_summary_json(summary, out_dir / "summary.json")
    if metrics.events:
        with open(out_dir / "events.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "der", "from", "to"])
            w.writerows(metrics.events)
    return summary


# --------------------------------------------------------------------------
# validation


def validation_report(
    network: NetworkModel,
    fleet: DerFleet,
    scenario: ScenarioTimeSeries | None = None,
    n_setpoints: int = 24,
    n_load_cases: int = 24,
    seed: int = 0,
) -> dict:
    """Admittance invariants, linear-model error sweep and scenario issues.

    The sweep draws setpoints from each sampled scenario row's capability set
    (box corners plus seeded uniform draws, pulled into the disk) and records
    the worst voltage prediction error ``E_hat`` (inf-norm, pu) and the worst
    spectral-norm Jacobian error ``E_J``.
    """
    violations: list[str] = []
    full = network.full_admittance
    if not np.allclose(full, full.T, atol=1e-12):
        violations.append("admittance matrix is not symmetric")
    shunt = np.zeros(network.n_buses, dtype=complex)
    for ln in network.lines:
        shunt[ln.from_bus] += 0.5j * ln.b_shunt
        shunt[ln.to_bus] += 0.5j * ln.b_shunt
    if not np.allclose(full.sum(axis=1), shunt, atol=1e-9 * max(1.0, np.abs(full).max())):
        violations.append("admittance row sums differ from the line-charging shunts")
    cond = float(np.linalg.cond(network.Y))
    flat = float(np.max(np.abs(np.abs(network.vbar) - abs(network.v0))))
    if network.lines and all(ln.b_shunt == 0 for ln in network.lines) and flat > 1e-9:
        violations.append(f"no-load profile deviates from |v0| by {flat:.3e} without shunts")

    issues = scenario.issues(network.n_buses, fleet) if scenario is not None else []
    violations += issues

    lin = build_linear_model(network, fleet.nodes)
    rng = np.random.default_rng(seed)
    if scenario is not None and not issues:
        rows = np.unique(np.linspace(0, scenario.n_samples - 1, n_load_cases).astype(int))
        cases = [(scenario.p_l[k], scenario.q_l[k], scenario.p_max[k]) for k in rows]
    else:
        zeros = np.zeros(network.n)
        cases = [(zeros, zeros, fleet.s_n)]
    e_hat = e_jac = 0.0
    n_samples = 0
    g = len(fleet)
    for p_l, q_l, p_max in cases:
        problem = OpfProblem(fleet.with_p_max(p_max))
        qlim = fleet.q_frac * fleet.s_n
        corners = [np.concatenate([a * p_max, b * qlim]) for a in (0.0, 1.0) for b in (-1.0, 0.0, 1.0)]
        draws = [
            np.concatenate([rng.uniform(0, 1, g) * p_max, rng.uniform(-1, 1, g) * qlim])
            for _ in range(max(0, n_setpoints - len(corners)))
        ]
        u_samples = [clamp_to_capability(problem, u) for u in corners + draws]
        rep = model_error_sweep(network, lin, u_samples, [(p_l, q_l)])
        e_hat, e_jac = max(e_hat, rep.e_hat), max(e_jac, rep.e_jac)
        n_samples += rep.n_samples
    return {
        "n_buses": network.n_buses,
        "n_ders": g,
        "y_condition": cond,
        "E_hat_pu": e_hat,
        "E_J": e_jac,
        "sweep_samples": n_samples,
        "violations": violations,
        "ok": not violations,
    }


# --------------------------------------------------------------------------
# commands


def _job(args: tuple[RunConfig, Inputs, Path | None]) -> dict:
    cfg, inputs, out_dir = args
    t0 = time.perf_counter()
    try:
        metrics = simulate(cfg, inputs)
    except (SimulationAborted, NoConvergence, MaxIterExceeded, PowerFlowDiverged) as exc:
        return {"controller": cfg.controller.kind, "error": str(exc)}
    extra = {"runtime_s": round(time.perf_counter() - t0, 3), "seed": cfg.seed}
    if out_dir is None:
        summary = metrics.summary()
        summary.update(extra)
        return summary
    return write_run_artifacts(metrics, out_dir, extra)


def cmd_run(cfg: RunConfig) -> int:
    inputs = load_inputs(cfg)
    issues = inputs.scenario.issues(inputs.network.n_buses, inputs.fleet)
    if issues:
        raise ConfigError("scenario: " + "; ".join(issues))
    summary = _job((cfg, inputs, cfg.out_dir))
    if "error" in summary:
        print(f"error: simulation aborted: {summary['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"wrote {cfg.out_dir}/steps.csv, summary.json, plot_data.csv")
    return EXIT_OK


def _format_table(rows: list[dict], columns=SUMMARY_COLUMNS) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return "-" if v is None else str(v)

    cells = [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[k]) for row in cells)) for k, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _write_table_csv(rows: list[dict], path: Path, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([r.get(c, "") for c in columns])


def _pool_map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def cmd_compare(cfg: RunConfig, controllers, workers: int) -> int:
    inputs = load_inputs(cfg)
    issues = inputs.scenario.issues(inputs.network.n_buses, inputs.fleet)
    if issues:
        raise ConfigError("scenario: " + "; ".join(issues))
    jobs = [
        (replace(cfg, controller=replace(cfg.controller, kind=kind)), inputs, cfg.out_dir / kind) for kind in controllers
    ]
    rows = _pool_map(_job, jobs, workers)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_table_csv(rows, cfg.out_dir / "compare.csv", SUMMARY_COLUMNS)
    print(_format_table(rows))
    failed = [r for r in rows if "error" in r]
    for r in failed:
        print(f"error: {r['controller']}: {r['error']}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_sweep(cfg: RunConfig, betas, etas, noises, workers: int) -> int:
    inputs = load_inputs(cfg)
    issues = inputs.scenario.issues(inputs.network.n_buses, inputs.fleet)
    if issues:
        raise ConfigError("scenario: " + "; ".join(issues))
    jobs, keys = [], []
    for beta, eta, noise in itertools.product(betas, etas, noises):
        sgf = replace(cfg.controller.sgf, beta=beta, eta=eta)
        run_cfg = replace(
            cfg,
            controller=replace(cfg.controller, kind="sgf", sgf=sgf),
            measurement=replace(cfg.measurement, noise_bound=noise),
        )
        jobs.append((run_cfg, inputs, None))
        keys.append({"beta": beta, "eta": eta, "noise": noise})
    rows = [{**k, **r} for k, r in zip(keys, _pool_map(_job, jobs, workers))]
    columns = ("beta", "eta", "noise", "max_voltage_pu", "overvoltage_samples", "cumulative_cost", "energy_losses_kwh", "qp_infeasible")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_table_csv(rows, cfg.out_dir / "sweep.csv", columns)
    print(_format_table(rows, columns))
    return EXIT_RUNTIME if any("error" in r for r in rows) else EXIT_OK


def cmd_validate(cfg: RunConfig, n_setpoints: int, n_load_cases: int) -> int:
    try:
        inputs = load_inputs(cfg)
    except PowerFlowDiverged:
        raise
    except NetworkError as exc:
        print(f"violation: {type(exc).__name__}: {exc}")
        return EXIT_CONFIG
    report = validation_report(inputs.network, inputs.fleet, inputs.scenario, n_setpoints, n_load_cases, seed=cfg.seed)
    print(f"buses: {report['n_buses']}  DERs: {report['n_ders']}  cond(Y): {report['y_condition']:.3e}")
    print(f"E_hat (max linear-model voltage error): {report['E_hat_pu']:.6e} pu")
    print(f"E_J (max Jacobian error, spectral norm): {report['E_J']:.6e}")
    print(f"sweep samples: {report['sweep_samples']}")
    for v in report["violations"]:
        print(f"violation: {v}")
    if cfg.out_dir is not None:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        write_summary_json(report, cfg.out_dir / "validate.json")
    print("ok" if report["ok"] else "FAILED")
    return EXIT_OK if report["ok"] else EXIT_CONFIG


def cmd_scenario(cfg: RunConfig, loads_out: Path, pmax_out: Path) -> int:
    inputs = load_inputs(cfg)
    write_scenario_csv(inputs.scenario, loads_out, pmax_out)
    print(f"wrote {loads_out} and {pmax_out} ({inputs.scenario.n_samples} samples)")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument handling


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated bus ids, got {text!r}") from exc


def _add_common(p: argparse.ArgumentParser, out_default: str) -> None:
    g = p.add_argument_group("inputs")
    g.add_argument("--network", type=Path, help="network JSON (default: bundled 12-bus feeder)")
    g.add_argument("--fleet", type=Path, help="DER fleet JSON (default: bundled fleet)")
    g.add_argument("--loads", type=Path, help="scenario loads CSV (t_s,node,p_l_pu,q_l_pu)")
    g.add_argument("--pmax", type=Path, help="scenario availability CSV (t_s,der,p_max_pu)")
    g.add_argument("--start-s", type=float, help="simulate from this scenario time")
    g.add_argument("--stop-s", type=float, help="simulate up to this scenario time")
    g.add_argument("--seed", type=int, help="RNG seed (default: $GRIDFLOW_SEED or 0)")
    g.add_argument("--out", type=Path, default=Path(out_default), help=f"output directory (default: {out_default})")
    c = p.add_argument_group("control")
    c.add_argument("--controller", choices=CONTROLLERS, default="sgf")
    c.add_argument("--beta", type=float, default=SgfConfig.beta, help="safe-flow barrier gain")
    c.add_argument("--eta", type=float, default=SgfConfig.eta, help="safe-flow step gain")
    c.add_argument("--dt-control-s", type=float, default=1.0, help="control period in seconds")
    c.add_argument("--tol-qp", type=float, default=TOL_QP)
    c.add_argument("--qp-max-iter", type=int, default=QP_MAX_ITER)
    c.add_argument("--exact-jacobian", action="store_true", help="use the exact voltage sensitivity each tick")
    c.add_argument("--v-lower", type=float, default=0.95)
    c.add_argument("--v-upper", type=float, default=1.05)
    c.add_argument("--noise", type=float, default=0.0, help="uniform measurement noise bound (pu)")
    c.add_argument("--pseudo-nodes", type=_int_list, default=(), help="buses measured by the linear model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridflow", description="Safe gradient flow voltage control on distribution feeders.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("run", help="run one closed-loop simulation"), "gridflow-out")

    p = sub.add_parser("compare", help="run several controllers on the same scenario")
    _add_common(p, "gridflow-compare")
    p.add_argument("--controllers", default=",".join(("nc", "vvc", "pdm", "sgf", "bo")))
    p.add_argument("--workers", type=int, default=min(5, os.cpu_count() or 1))

    p = sub.add_parser("validate", help="check network, linear model and scenario")
    _add_common(p, "gridflow-validate")
    p.add_argument("--setpoints", type=int, default=24, help="setpoint samples per load case")
    p.add_argument("--load-cases", type=int, default=24, help="scenario rows in the error sweep")

    p = sub.add_parser("sweep", help="SGF over a grid of beta, eta and noise")
    _add_common(p, "gridflow-sweep")
    p.add_argument("--betas", type=_float_list, default=[1.0])
    p.add_argument("--etas", type=_float_list, default=[0.2])
    p.add_argument("--noises", type=_float_list, default=[0.0])
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("scenario", help="export the bundled synthetic day as CSV")
    _add_common(p, ".")
    p.add_argument("--loads-out", type=Path, default=Path("loads.csv"))
    p.add_argument("--pmax-out", type=Path, default=Path("pmax.csv"))
    return parser


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("GRIDFLOW_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"GRIDFLOW_SEED: expected an integer, got {env!r}") from exc


def config_from_args(args: argparse.Namespace) -> RunConfig:
    for name in ("beta", "eta", "dt_control_s", "tol_qp"):
        if getattr(args, name) <= 0:
            raise ConfigError(f"{name.replace('_', '-')}: must be positive")
    if args.qp_max_iter < 1:
        raise ConfigError("qp-max-iter: must be at least 1")
    if args.noise < 0:
        raise ConfigError("noise: must be nonnegative")
    sgf = SgfConfig(beta=args.beta, eta=args.eta, dt=args.dt_control_s, tol_qp=args.tol_qp, qp_max_iter=args.qp_max_iter)
    return RunConfig(
        network_path=args.network,
        fleet_path=args.fleet,
        loads_path=args.loads,
        pmax_path=args.pmax,
        controller=ControllerConfig(kind=args.controller, sgf=sgf, exact_jacobian=args.exact_jacobian),
        v_lower=args.v_lower,
        v_upper=args.v_upper,
        measurement=MeasurementModel(noise_bound=args.noise, pseudo_nodes=args.pseudo_nodes),
        seed=_resolve_seed(args.seed),
        dt=args.dt_control_s,
        start_s=args.start_s,
        stop_s=args.stop_s,
        out_dir=args.out,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the config-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "compare":
            kinds = [k.strip() for k in args.controllers.split(",") if k.strip()]
            unknown = [k for k in kinds if k not in CONTROLLERS]
            if unknown or not kinds:
                raise ConfigError(f"controllers: unknown kinds {unknown}; choose from {', '.join(CONTROLLERS)}")
            return cmd_compare(cfg, kinds, args.workers)
        if args.command == "validate":
            return cmd_validate(cfg, args.setpoints, args.load_cases)
        if args.command == "sweep":
            if min(args.betas + args.etas) <= 0 or min(args.noises) < 0:
                raise ConfigError("betas/etas: must be positive; noises: must be nonnegative")
            return cmd_sweep(cfg, args.betas, args.etas, args.noises, args.workers)
        if args.command == "scenario":
            return cmd_scenario(cfg, args.loads_out, args.pmax_out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationAborted, NoConvergence, MaxIterExceeded, PowerFlowDiverged) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except NetworkError as exc:
        print(f"config error: network: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    parser.error(f"unknown command {args.command}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
