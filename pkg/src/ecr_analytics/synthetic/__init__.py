"""Scripted ground-truth scenarios, stream rendering and reference oracles."""
from .library import SHIPPED, default_room, occlusion_four, pathological, perfect_doctrine, random_scenario, single_agent
from .oracles import OracleData, oracle_all, oracle_metric, oracle_rollup, oracle_track_assignment
from .render import GroundTruth, context_from_truth, default_camera, render_scenario
from .scenario import AgentScript, GazeSegment, NoiseModel, ScenarioScript, load_scenario, scenario_from_dict

__all__ = [
    "SHIPPED", "default_room", "occlusion_four", "pathological", "perfect_doctrine", "random_scenario",
    "single_agent", "OracleData", "oracle_all", "oracle_metric", "oracle_rollup", "oracle_track_assignment",
    "GroundTruth", "context_from_truth", "default_camera", "render_scenario", "AgentScript", "GazeSegment",
    "NoiseModel", "ScenarioScript", "load_scenario", "scenario_from_dict",
]
