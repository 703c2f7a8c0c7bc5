"""Shared fixtures: the demo scenarios are expensive, so they run once."""

import pytest

from funnelkit.scenarios import precompensator_demo, tracking_demo
from funnelkit.simloop import run_closed_loop, run_open_loop


@pytest.fixture(scope="session")
def signal_demo_results():
    """Open-loop cascade runs for the pole sweep s0 in {1, 3, 5}."""
    return {s0: run_open_loop(precompensator_demo(s0=s0)) for s0 in (1.0, 3.0, 5.0)}


@pytest.fixture(scope="session")
def tracking_scenario():
    return tracking_demo()


@pytest.fixture(scope="session")
def tracking_result(tracking_scenario):
    return run_closed_loop(tracking_scenario)


@pytest.fixture(scope="session")
def tracking_result_fine():
    scenario = tracking_demo(rtol=1e-7, atol=1e-9)
    return run_closed_loop(scenario)
