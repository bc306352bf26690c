import numpy as np
import pytest

from gridflow.assets import bundled_fleet, bundled_network, synthetic_summer_day
from gridflow.netmodel import Line, build_admittance
from gridflow.opf import DerDevice, DerFleet


@pytest.fixture(scope="session")
def feeder():
    return bundled_network()


@pytest.fixture(scope="session")
def fleet(feeder):
    return bundled_fleet(feeder)


@pytest.fixture(scope="session")
def summer_day(feeder, fleet):
    return synthetic_summer_day(feeder, fleet)


@pytest.fixture
def two_bus():
    """Substation plus one bus behind z = 0.05 + j0.05 pu."""
    return build_admittance([Line(0, 1, 0.05, 0.05)], 2)


@pytest.fixture
def two_bus_fleet():
    return DerFleet((DerDevice(node=1, s_n=1.5, p_max=1.5),))


def random_radial(rng, n_buses, shunt=False):
    """Random tree rooted at the substation with resistive-inductive lines."""
    lines = []
    for k in range(1, n_buses):
        parent = int(rng.integers(0, k))
        r, x = rng.uniform(0.002, 0.02), rng.uniform(0.002, 0.02)
        lines.append(Line(parent, k, r, x, rng.uniform(0, 0.01) if shunt else 0.0))
    return lines
