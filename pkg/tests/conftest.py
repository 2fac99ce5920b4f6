import json

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kerrtpa.core import LaserSpec, TemporalGrid, WaveguideSpec, convert_loss

settings.register_profile(
    "kerrtpa", max_examples=200, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("kerrtpa")

# Room-temperature table values used as inputs in several tests (SI).
TABLE_300K = {"beta": 0.761e-11, "n2": 5.18e-18, "sigma": 3.7e-22}
A_EFF = 0.1e-12


@pytest.fixture
def laser():
    return LaserSpec(4.9e-12, 50e6, 1551.8e-9)


@pytest.fixture
def waveguide():
    return WaveguideSpec(19.09e-3, convert_loss(2.4), A_EFF)


@pytest.fixture
def small_grid():
    return TemporalGrid.centered(512, 48e-12)


# Config overrides that keep end-to-end runs to a few seconds.
FAST = {
    "waveguide": {"a_eff_um2": 0.1},
    "grid": {"n_samples": 512, "window_ps": 48.0},
    "solver": {"dz_um": 20.0},
}


@pytest.fixture
def fast_config(tmp_path):
    def make(**sections):
        data = json.loads(json.dumps(FAST))
        for sec, vals in sections.items():
            data.setdefault(sec, {}).update(vals)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data))
        return path
    return make


def rel(a, b):
    return abs(a - b) / abs(b)


def sech2(t, t0):
    return 1.0 / np.cosh(t / t0) ** 2
