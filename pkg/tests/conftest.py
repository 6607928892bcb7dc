from __future__ import annotations

import numpy as np
import pytest

from dampnav.geometry import Sphere, WorldModel
from dampnav.planners import NavigationFunctionPlanner, NfPlannerParams
from dampnav.scenario_io import load_scenario
from dampnav.simulation import batch_run

# lines reported by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []

_RUNS: dict[str, tuple] = {}


def bundled_runs(name: str):
    """Scenario and batch results for a bundled scenario, computed once per session."""
    if name not in _RUNS:
        sc = load_scenario(name)
        _RUNS[name] = (sc, batch_run(sc))
    return _RUNS[name]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def sim1_world() -> WorldModel:
    return WorldModel((Sphere(center=np.array([-5.0, -1.0]), radius=1.0),), robot_radius=0.5)


@pytest.fixture
def sim1_planner(sim1_world) -> NavigationFunctionPlanner:
    params = NfPlannerParams(k1=2.0, kappa=6.0, delta1=0.01, delta2=0.01, target=(0.0, 0.0))
    return NavigationFunctionPlanner(params, sim1_world)
