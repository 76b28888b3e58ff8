"""Benchmark aggregation: per-episode metrics plus suite-level Score,
Collision (fraction collision-free), and Progress columns."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..world.scene import ScenarioLog, WorldParams
from .episode import EpisodeConfig, EpisodeMetrics, EpisodeTrace, run_episode


@dataclass
class BenchmarkReport:
    rows: list[dict]
    score: float
    collision: float  # fraction of episodes without a collision
    progress: float
    episode_count: int
    traces: list[EpisodeTrace] = field(default_factory=list)


def run_benchmark(planner, logs: list[ScenarioLog], config: EpisodeConfig,
                  params: WorldParams, keep_traces: bool = False) -> BenchmarkReport:
    if not logs:
        raise ValidationError("benchmark needs a non-empty scenario suite")
    rows = []
    traces = []
    for log in logs:
        metrics, trace = run_episode(planner, log, config, params)
        rows.append({
            "scenario_id": log.scenario_id,
            "template": log.template,
            "collided": int(metrics.collided),
            "offroad": int(metrics.offroad),
            "progress": repr(metrics.progress),
            "score": repr(metrics.score),
            "failed": int(metrics.failed),
        })
        if keep_traces:
            traces.append(trace)
    score = float(np.mean([float(r["score"]) for r in rows]))
    collision = float(np.mean([1 - r["collided"] for r in rows]))
    progress = float(np.mean([float(r["progress"]) for r in rows]))
    return BenchmarkReport(rows=rows, score=score, collision=collision, progress=progress,
                           episode_count=len(rows), traces=traces)


def write_benchmark_csv(report: BenchmarkReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["scenario_id", "template", "collided", "offroad",
                           "progress", "score", "failed"]
        )
        writer.writeheader()
        writer.writerows(report.rows)


def write_benchmark_json(report: BenchmarkReport, path, config_hash: str = "",
                         checkpoint_hash: str = "", extra: dict | None = None) -> None:
    doc = {
        "score": report.score,
        "collision": report.collision,
        "progress": report.progress,
        "episode_count": report.episode_count,
        "config_hash": config_hash,
        "checkpoint_hash": checkpoint_hash,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
