"""Deterministic fixed-step simulation of robot teams identifying a payload."""

from coopadapt.sim.trajectories import (
    JointSinusoidSpec,
    RotationOnlySpec,
    SinusoidTerm,
    TranslationOnlySpec,
    reference,
    resolve_trajectory,
    tip_pose,
)
from coopadapt.sim.scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    save_resolved,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)
from coopadapt.sim.engine import RunResult, Simulation, TimeSeries, run
