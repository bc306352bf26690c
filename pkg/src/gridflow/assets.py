"""Bundled desk-scale feeder, DER fleet, and a synthetic 24 h summer day.

The feeder is a 12-bus radial 20 kV line with PV at the three feeder ends
(740 kVA at bus 7, 620 kVA at bus 9, 490 kVA at bus 11). Around solar noon
the uncontrolled PV pushes the far-end voltages past 1.06 pu.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .netmodel import NetworkModel, load_network
from .opf import DerFleet, load_fleet

DAY_S = 86_400
SAMPLE_S = 10
LOAD_POWER_FACTOR = 0.9

# share of the feeder load per PQ bus 1..11
LOAD_SHARES = np.array([0.11, 0.09, 0.12, 0.08, 0.10, 0.07, 0.09, 0.08, 0.09, 0.09, 0.08])


def data_path(name: str) -> Path:
    return Path(str(resources.files("gridflow") / "data" / name))


def bundled_network() -> NetworkModel:
    return load_network(data_path("feeder12.json"))


def bundled_fleet(network: NetworkModel | None = None) -> DerFleet:
    network = network or bundled_network()
    return load_fleet(data_path("fleet12.json"), network.base_mva)


def _bump(t_h, centre, width):
    return np.exp(-0.5 * ((t_h - centre) / width) ** 2)


def load_shape(t_s) -> np.ndarray:
    """Aggregate residential load in [0.35, 1], evening peak, noon trough."""
    t_h = np.asarray(t_s, dtype=float) / 3600.0
    shape = 0.38 + 0.22 * _bump(t_h, 8.0, 1.3) + 0.12 * _bump(t_h, 13.0, 2.0) + 0.62 * _bump(t_h, 19.5, 2.0)
    shape += 0.3 * _bump(t_h, -4.5, 2.0) + 0.3 * _bump(t_h, 43.5, 2.0)  # wrap the evening peak over midnight
    return np.clip(shape, 0.0, 1.0)


def pv_shape(t_s, sunrise_h: float = 5.5, sunset_h: float = 21.0) -> np.ndarray:
    """Clear-sky PV availability as a fraction of the rating, zero at night."""
    t_h = np.asarray(t_s, dtype=float) / 3600.0
    x = (t_h - sunrise_h) / (sunset_h - sunrise_h)
    return np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)) ** 1.4, 0.0)


def synthetic_summer_day(
    network: NetworkModel,
    fleet: DerFleet,
    peak_load_mw: float = 1.3,
    pv_peak_frac: float = 0.9,
    seed: int = 0,
    duration_s: int = DAY_S,
    period_s: int = SAMPLE_S,
):
    """High-PV summer day on a 10 s grid; loads consumption-positive at pf 0.9 lagging."""
    from .sim import ScenarioTimeSeries

    rng = np.random.default_rng(seed)
    t = np.arange(0, duration_s, period_s, dtype=float)
    shares = LOAD_SHARES / LOAD_SHARES.sum()
    if shares.size != network.n:
        raise ValueError("bundled load shares fit the 12-bus feeder only")
    # slow per-bus diversity, deterministic under the seed
    periods = rng.uniform(2.0, 5.0, size=network.n) * 3600.0
    phases = rng.uniform(0, 2 * np.pi, size=network.n)
    diversity = 1.0 + 0.05 * np.sin(2 * np.pi * t[:, None] / periods + phases)
    p_l = (peak_load_mw / network.base_mva) * load_shape(t)[:, None] * shares * diversity
    q_l = p_l * np.tan(np.arccos(LOAD_POWER_FACTOR))
    p_max = pv_peak_frac * pv_shape(t)[:, None] * fleet.s_n
    return ScenarioTimeSeries(period_s=float(period_s), p_l=p_l, q_l=q_l, p_max=p_max)
