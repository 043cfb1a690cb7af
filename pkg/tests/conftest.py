"""Shared fixtures: the reference system and expensive session-scoped runs."""

import pytest

from lqshared.design import DesignProblem, design_automation
from lqshared.games import CostParams, GameSystem, GlobalObjective
from lqshared.scenario import ScenarioConfig, run_scenario


@pytest.fixture(scope="session")
def vm_system() -> GameSystem:
    """Three-state vehicle-manipulator error dynamics."""
    return GameSystem(
        [[-0.1, 0.0, 0.0], [0.0, 0.0, 0.9], [0.0, 0.0, 0.0]],
        [[[1.95], [0.0], [1.25]], [[0.85], [0.0], [0.0]]],
    )


@pytest.fixture(scope="session")
def human_cost_strong() -> CostParams:
    return CostParams([50.0, 0.2, 0.2], [1.0])


@pytest.fixture(scope="session")
def human_cost_weak() -> CostParams:
    return CostParams([0.5, 0.2, 0.2], [1.0])


@pytest.fixture(scope="session")
def global_objective() -> GlobalObjective:
    return GlobalObjective([35.0, 1.0, 3.0], [[1.0], [1.0]])


@pytest.fixture(scope="session")
def offline_design(vm_system, human_cost_strong, global_objective):
    """Initial automation design against the strong human (shared by tests)."""
    problem = DesignProblem(
        sys=vm_system, human_cost=human_cost_strong, objective=global_objective,
        theta_a_init=CostParams([35.0, 1.0, 3.0], [1.0]), budget=3000, seed=42)
    return design_automation(problem)


@pytest.fixture(scope="session")
def paired_scenario_runs(offline_design):
    """Adaptive and baseline 120 s runs sharing the same initial design."""
    cfg_a = ScenarioConfig(adaptive=True)
    cfg_b = ScenarioConfig(adaptive=False)
    series_a, summary_a = run_scenario(cfg_a, offline_design)
    series_b, summary_b = run_scenario(cfg_b, offline_design)
    return {
        "adaptive": (series_a, summary_a),
        "baseline": (series_b, summary_b),
    }
