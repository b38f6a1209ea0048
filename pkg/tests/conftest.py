"""Shared fixtures: the desk-scale scenario, a tiny oracle-sized scenario,
and pre-generated sample sets."""

import numpy as np
import pytest

from coisac.channel import synth_channels
from coisac.profiles import scenario_profile
from coisac.scenario import ScenarioConfig

WAVELENGTH = 299792458.0 / 28e9


def tiny_config(n_bs=2, n_users=2, array=2, seed_region=60.0, **kw):
    """N=2, K=2, L=4 scenario used by the small-instance oracles."""
    defaults = dict(
        n_bs=n_bs, n_users=n_users, n_targets=1, array_x=array, array_z=array,
        spacing=WAVELENGTH / 2, wavelength=WAVELENGTH,
        bs_positions=[[0.0, 0.0, 6.0], [seed_region, 0.0, 6.0],
                      [0.0, seed_region, 6.0]][:n_bs],
        target_positions=[[30.0, 40.0, 20.0]],
        user_region=[[0.0, 0.0, 1.5], [seed_region, seed_region, 1.5]],
        power_budget=0.1, rcs_scale=3.5e5)
    defaults.update(kw)
    return ScenarioConfig(**defaults)


@pytest.fixture(scope="session")
def smoke_cfg():
    return scenario_profile("smoke")


@pytest.fixture(scope="session")
def smoke_samples(smoke_cfg):
    return synth_channels(smoke_cfg, 16, seed=123)


@pytest.fixture(scope="session")
def tiny_cfg():
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_samples(tiny_cfg):
    return synth_channels(tiny_cfg, 8, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
