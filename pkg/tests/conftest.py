import sys

import numpy as np
import pytest

from lasermarl.sim import WorldConfig


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture
def small_world():
    return WorldConfig(width_m=200.0, height_m=200.0, num_sensors=5, num_uavs=2, station_xy=(100.0, 100.0),
                       charge_radius_m=50.0, num_lbds=1, horizon_steps=30, seed=3)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
