from .planner import DiffusionPlanner, LogReplayPlanner, ZeroActionPlanner, PlanResult
from .episode import EpisodeConfig, EpisodeMetrics, EpisodeTrace, run_episode
from .benchmark import run_benchmark, BenchmarkReport, write_benchmark_csv, write_benchmark_json
from .render import render_episode, render_scene_svg

__all__ = [
    "DiffusionPlanner",
    "LogReplayPlanner",
    "ZeroActionPlanner",
    "PlanResult",
    "EpisodeConfig",
    "EpisodeMetrics",
    "EpisodeTrace",
    "run_episode",
    "run_benchmark",
    "BenchmarkReport",
    "write_benchmark_csv",
    "write_benchmark_json",
    "render_episode",
    "render_scene_svg",
]
