from .scene import AgentState, AgentTrack, MapPolyline, Scene, ScenarioLog, WorldParams
from .dynamics import rollout_dynamics, rollout_backward, fit_actions
from .predicates import CollisionReport, check_collision, check_offroad, progress_along_route
from .synth import SynthConfig, synth_scenarios
from .geometry import wrap_angle

__all__ = [
    "AgentState",
    "AgentTrack",
    "MapPolyline",
    "Scene",
    "ScenarioLog",
    "WorldParams",
    "SynthConfig",
    "CollisionReport",
    "rollout_dynamics",
    "rollout_backward",
    "fit_actions",
    "check_collision",
    "check_offroad",
    "progress_along_route",
    "synth_scenarios",
    "wrap_angle",
]
