"""Pipeline entry point.

Subcommands: synth-data, train-base, gen-prefs, serve-labeler, train-reward,
finetune, evaluate, render. Exit codes: 0 success, 2 config error, 3 missing
upstream artifact, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from .artifacts import artifact_path, derive_seed, hash_directory, read_meta, sha256_file, write_meta
from .config import PipelineConfig, config_hash, config_to_dict, load_config_with_overrides
from .errors import ConfigError, DiffdriveError, MissingArtifactError
from .rng import make_rng
from .world.scene import ScenarioLog, scenario_from_json, scenario_to_json
from .world.synth import SynthConfig, synth_scenarios


def _load_suite(workdir: Path, suite: str, needed_by: str) -> list[ScenarioLog]:
    meta = read_meta(workdir, "synth-data", needed_by)
    suite_dir = Path(meta["suite_dirs"][suite])
    files = sorted(suite_dir.glob("*.json"))
    if not files:
        raise MissingArtifactError(f"scenario suite {suite!r} is empty; re-run `diffdrive synth-data`")
    if hash_directory(files) != meta["suite_hashes"][suite]:
        raise MissingArtifactError(
            f"scenario suite {suite!r} changed since synth-data ran; re-run it"
        )
    return [scenario_from_json(p.read_text()) for p in files]


def _build_denoiser(cfg: PipelineConfig):
    from .diffusion.model import DenoiserConfig, DenoiserModel

    mc = cfg.model
    return DenoiserModel(
        cfg.world,
        DenoiserConfig(dim=mc.dim, heads=mc.heads, enc_layers=mc.enc_layers,
                       dec_layers=mc.dec_layers, diffusion_steps=mc.diffusion_steps,
                       ffn_mult=mc.ffn_mult),
        make_rng(cfg.seed, 1),
    )


def _build_evaluator(cfg: PipelineConfig):
    from .reward.model import EvaluatorConfig, EvaluatorModel

    ec = cfg.evaluator
    return EvaluatorModel(
        cfg.world,
        EvaluatorConfig(dim=ec.dim, heads=ec.heads, enc_layers=ec.enc_layers,
                        dec_layers=ec.dec_layers, ffn_mult=ec.ffn_mult),
        make_rng(cfg.seed, 2),
    )


def _schedule(cfg: PipelineConfig):
    from .diffusion.schedule import cosine_schedule

    return cosine_schedule(cfg.model.diffusion_steps)


def _load_checkpoint_into(model, path: Path):
    from .nn.io import load_params

    store = load_params(path)
    for name in model.store.keys():
        model.store[name] = store[name]


def cmd_synth_data(cfg: PipelineConfig, args) -> None:
    workdir = Path(cfg.workdir)
    suites = {
        "train": (cfg.data.n_scenarios, cfg.data.train_future_len, 11),
        "prefs": (cfg.data.pref_scenarios, cfg.data.train_future_len, 12),
        "bench": (cfg.data.bench_scenarios, cfg.data.bench_future_len, 13),
    }
    suite_dirs = {}
    suite_hashes = {}
    for name, (n, future_len, salt) in suites.items():
        out = workdir / "data" / name
        out.mkdir(parents=True, exist_ok=True)
        for stale in out.glob("*.json"):
            stale.unlink()
        synth_cfg = SynthConfig(
            n_scenarios=n, future_len=future_len,
            templates=tuple(cfg.data.templates), params=cfg.world,
        )
        logs = synth_scenarios(synth_cfg, derive_seed(cfg.seed, salt))
        files = []
        for i, log in enumerate(logs):
            p = out / f"{i:05d}_{log.scenario_id}.json"
            p.write_text(scenario_to_json(log))
            files.append(p)
        suite_dirs[name] = str(out)
        suite_hashes[name] = hash_directory(files)
        print(f"synth-data: wrote {len(files)} {name} scenarios -> {out}")
    write_meta(workdir, "synth-data", config_hash(cfg), cfg.seed, inputs={}, outputs={},
               extra={"suite_dirs": suite_dirs, "suite_hashes": suite_hashes})
    print(f"synth-data: dataset hash {suite_hashes['train'][:16]}... done")


def cmd_train_base(cfg: PipelineConfig, args) -> None:
    from .diffusion.train import TrainConfig, train_base
    from .nn.io import save_params

    workdir = Path(cfg.workdir)
    logs = _load_suite(workdir, "train", "train-base")
    model = _build_denoiser(cfg)
    tb = cfg.train_base
    ckpt_dir = workdir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    history = train_base(
        model, _schedule(cfg), logs,
        TrainConfig(epochs=tb.epochs, batch_size=tb.batch_size, lr=tb.lr,
                    lr_decay=tb.lr_decay, lr_decay_every=tb.lr_decay_every,
                    weight_decay=tb.weight_decay, val_fraction=tb.val_fraction),
        seed=cfg.seed,
        log_path=ckpt_dir / "base_loss.csv",
    )
    ckpt = ckpt_dir / "base.params"
    save_params(model.store, ckpt)
    train_meta = read_meta(workdir, "synth-data", "train-base")
    write_meta(workdir, "train-base", config_hash(cfg), cfg.seed,
               inputs={"train_suite": train_meta["suite_hashes"]["train"]},
               outputs={"checkpoint": ckpt, "loss_log": ckpt_dir / "base_loss.csv"},
               extra={"model": config_to_dict(cfg.model), "final": history[-1]})
    print(f"train-base: {len(history)} epochs, final {history[-1]} -> {ckpt}")


def cmd_gen_prefs(cfg: PipelineConfig, args) -> None:
    from .prefdata.anchors import extract_anchors
    from .prefdata.candidates import generate_candidates
    from .prefdata.judges import HumanJudge, OracleJudge, VlmConfig, VlmJudgeClient
    from .prefdata.pairs import make_pairs
    from .prefdata.store import append_pending, append_records

    workdir = Path(cfg.workdir)
    ckpt = artifact_path(workdir, "train-base", "checkpoint", "gen-prefs")
    model = _build_denoiser(cfg)
    _load_checkpoint_into(model, ckpt)
    schedule = _schedule(cfg)
    train_logs = _load_suite(workdir, "train", "gen-prefs")
    pref_logs = _load_suite(workdir, "prefs", "gen-prefs")

    anchors = extract_anchors(train_logs, cfg.world, k=cfg.prefdata.anchor_count,
                              seed=derive_seed(cfg.seed, 21),
                              source_hash=read_meta(workdir, "synth-data", "gen-prefs")
                              ["suite_hashes"]["train"])
    if cfg.prefdata.judge == "oracle":
        judge = OracleJudge()
    elif cfg.prefdata.judge == "human":
        judge = HumanJudge()
    else:
        judge = VlmJudgeClient(VlmConfig(
            base_url=cfg.vlm.base_url, api_key_env=cfg.vlm.api_key_env, model=cfg.vlm.model,
            timeout=cfg.vlm.timeout, images_enabled=cfg.vlm.images_enabled))

    prefs_dir = workdir / "prefs"
    prefs_dir.mkdir(parents=True, exist_ok=True)
    records_path = prefs_dir / "records.jsonl"
    pending_path = prefs_dir / "pending.jsonl"
    for stale in (records_path, pending_path):
        if stale.exists():
            stale.unlink()

    n_records = 0
    n_pending = 0
    seed = derive_seed(cfg.seed, 22)
    for sc_index, log in enumerate(pref_logs):
        scene, _ = log.training_example(cfg.world)
        cands = generate_candidates(model, schedule, scene, anchors,
                                    cfg.prefdata.guidance_strength, seed, sc_index)
        pairs, pending = make_pairs(
            scene, cands, judge, seed, sc_index,
            max_pairs=cfg.prefdata.pairs_per_scenario,
            discrepancy_threshold=cfg.prefdata.discrepancy_threshold,
            timestamp_fn=lambda i, base=sc_index: float(base * 10000 + i),
        )
        for p in pending:
            p.geometry = {
                "dt": log.dt,
                "ego_id": log.ego_id,
                "map": [{"kind": m.kind, "waypoints": m.waypoints.tolist()}
                        for m in scene.map_polylines],
                "route": [{"kind": r.kind, "waypoints": r.waypoints.tolist()}
                          for r in scene.route_polylines],
                "agents": [{"agent_id": a.agent_id, "kind": a.kind, "length": a.length,
                            "width": a.width} for a in scene.agents],
            }
        if pairs:
            append_records(records_path, pairs)
        if pending:
            append_pending(pending_path, pending)
        n_records += len(pairs)
        n_pending += len(pending)

    anchors_path = prefs_dir / "anchors.json"
    anchors_path.write_text(json.dumps(
        {"anchors": anchors.anchors.tolist(), "source_hash": anchors.source_hash}, sort_keys=True))
    outputs = {"anchors": anchors_path}
    if records_path.exists():
        outputs["records"] = records_path
    if pending_path.exists():
        outputs["pending"] = pending_path
    write_meta(workdir, "gen-prefs", config_hash(cfg), cfg.seed,
               inputs={"checkpoint": sha256_file(ckpt)}, outputs=outputs,
               extra={"n_records": n_records, "n_pending": n_pending})
    print(f"gen-prefs: {n_records} judged pairs, {n_pending} pending -> {prefs_dir}")


def cmd_train_reward(cfg: PipelineConfig, args) -> None:
    from .nn.io import save_params
    from .prefdata.store import load_pref_dataset
    from .reward.train import RewardTrainConfig, prepare_pair, train_reward, write_eval_report

    workdir = Path(cfg.workdir)
    records_path = artifact_path(workdir, "gen-prefs", "records", "train-reward")
    records = load_pref_dataset(records_path)
    pref_logs = {log.scenario_id: log for log in _load_suite(workdir, "prefs", "train-reward")}
    model = _build_evaluator(cfg)
    pairs = []
    for rec in records:
        log = pref_logs.get(rec.scenario_id)
        if log is None:
            raise MissingArtifactError(
                f"preference pair {rec.pair_id} references unknown scenario {rec.scenario_id}"
            )
        scene, _ = log.training_example(cfg.world)
        pairs.append(prepare_pair(model, scene, rec.accepted_future, rec.rejected_future,
                                  pair_id=rec.pair_id))
    tr = cfg.train_reward
    ckpt_dir = workdir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    history = train_reward(
        model, pairs,
        RewardTrainConfig(epochs=tr.epochs, batch_size=tr.batch_size, lr=tr.lr,
                          weight_decay=tr.weight_decay, aux_weight=tr.aux_weight,
                          val_fraction=tr.val_fraction),
        seed=cfg.seed, log_path=ckpt_dir / "reward_curve.csv",
    )
    ckpt = ckpt_dir / "reward.params"
    save_params(model.store, ckpt)
    report = ckpt_dir / "reward_eval.csv"
    acc = write_eval_report(model, pairs, report)
    write_meta(workdir, "train-reward", config_hash(cfg), cfg.seed,
               inputs={"records": sha256_file(records_path)},
               outputs={"checkpoint": ckpt, "curve": ckpt_dir / "reward_curve.csv",
                        "eval_report": report},
               extra={"final": history[-1], "full_dataset_accuracy": acc})
    print(f"train-reward: final {history[-1]} -> {ckpt}")


def cmd_finetune(cfg: PipelineConfig, args) -> None:
    from .ddpo.finetune import FinetuneConfig, finetune
    from .diffusion.train import prepare_example
    from .nn.io import save_params

    workdir = Path(cfg.workdir)
    base_ckpt = artifact_path(workdir, "train-base", "checkpoint", "finetune")
    reward_ckpt = artifact_path(workdir, "train-reward", "checkpoint", "finetune")
    model = _build_denoiser(cfg)
    _load_checkpoint_into(model, base_ckpt)
    evaluator = _build_evaluator(cfg)
    _load_checkpoint_into(evaluator, reward_ckpt)
    pref_logs = _load_suite(workdir, "prefs", "finetune")
    examples = []
    for log in pref_logs:
        scene, _ = log.training_example(cfg.world)
        examples.append((scene, prepare_example(log, cfg.world)))
    ft = cfg.finetune
    ckpt_dir = workdir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    history = finetune(
        model, evaluator, _schedule(cfg), examples,
        FinetuneConfig(reg_weight=ft.reg_weight, clip=ft.clip, samples=ft.samples, lr=ft.lr,
                       steps=ft.steps, iters=ft.iters, weight_decay=ft.weight_decay,
                       checkpoint_every=ft.checkpoint_every),
        seed=derive_seed(cfg.seed, 31),
        log_path=ckpt_dir / "finetune_progress.csv",
        checkpoint_dir=ckpt_dir,
        save_fn=lambda m, p: save_params(m.store, p),
    )
    ckpt = ckpt_dir / "finetuned.params"
    save_params(model.store, ckpt)
    first = np.mean([h["mean_raw_reward"] for h in history[:20]])
    last = np.mean([h["mean_raw_reward"] for h in history[-20:]])
    write_meta(workdir, "finetune", config_hash(cfg), cfg.seed,
               inputs={"base": sha256_file(base_ckpt), "reward": sha256_file(reward_ckpt)},
               outputs={"checkpoint": ckpt, "progress": ckpt_dir / "finetune_progress.csv"},
               extra={"mean_raw_reward_first20": float(first),
                      "mean_raw_reward_last20": float(last)})
    print(f"finetune: reward first20 {first:.4f} -> last20 {last:.4f}; saved {ckpt}")


def cmd_evaluate(cfg: PipelineConfig, args) -> None:
    from .sim.benchmark import run_benchmark, write_benchmark_csv, write_benchmark_json
    from .sim.episode import EpisodeConfig
    from .sim.planner import DiffusionPlanner

    workdir = Path(cfg.workdir)
    which = args.checkpoint
    stage = {"base": "train-base", "finetuned": "finetune"}.get(which)
    if stage is None:
        raise ConfigError(f"--checkpoint must be base or finetuned, got {which!r}")
    ckpt = artifact_path(workdir, stage, "checkpoint", "evaluate")
    model = _build_denoiser(cfg)
    _load_checkpoint_into(model, ckpt)
    evaluator = None
    if cfg.evaluate.planner_mode == "multi":
        reward_ckpt = artifact_path(workdir, "train-reward", "checkpoint", "evaluate")
        evaluator = _build_evaluator(cfg)
        _load_checkpoint_into(evaluator, reward_ckpt)
    logs = _load_suite(workdir, "bench", "evaluate")
    planner = DiffusionPlanner(model, _schedule(cfg), evaluator=evaluator,
                               mode=cfg.evaluate.planner_mode,
                               sample_count=cfg.evaluate.sample_count)
    ep_cfg = EpisodeConfig(duration=cfg.evaluate.duration, replan_period=cfg.evaluate.replan_period,
                           planner_mode=cfg.evaluate.planner_mode,
                           sample_count=cfg.evaluate.sample_count, seed=cfg.seed)
    report = run_benchmark(planner, logs, ep_cfg, cfg.world)
    reports_dir = workdir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    tag = f"{which}_{cfg.evaluate.planner_mode}"
    csv_path = reports_dir / f"benchmark_{tag}.csv"
    json_path = reports_dir / f"benchmark_{tag}.json"
    write_benchmark_csv(report, csv_path)
    write_benchmark_json(report, json_path, config_hash=config_hash(cfg),
                         checkpoint_hash=sha256_file(ckpt))
    write_meta(workdir, f"evaluate-{tag}", config_hash(cfg), cfg.seed,
               inputs={"checkpoint": sha256_file(ckpt)},
               outputs={"csv": csv_path, "json": json_path})
    print(f"evaluate[{tag}]: score {report.score:.4f} collision {report.collision:.4f} "
          f"progress {report.progress:.4f} over {report.episode_count} episodes")


def cmd_render(cfg: PipelineConfig, args) -> None:
    from .sim.episode import EpisodeConfig, run_episode
    from .sim.planner import DiffusionPlanner, LogReplayPlanner
    from .sim.render import render_episode

    workdir = Path(cfg.workdir)
    logs = _load_suite(workdir, "bench", "render")
    wanted = args.scenario or logs[0].scenario_id
    log = next((l for l in logs if l.scenario_id == wanted), None)
    if log is None:
        raise ConfigError(f"scenario {wanted!r} not in the benchmark suite")
    if args.checkpoint == "replay":
        planner = LogReplayPlanner()
    else:
        stage = {"base": "train-base", "finetuned": "finetune"}.get(args.checkpoint)
        if stage is None:
            raise ConfigError("--checkpoint must be base, finetuned, or replay")
        ckpt = artifact_path(workdir, stage, "checkpoint", "render")
        model = _build_denoiser(cfg)
        _load_checkpoint_into(model, ckpt)
        evaluator = None
        if cfg.evaluate.planner_mode == "multi":
            evaluator = _build_evaluator(cfg)
            _load_checkpoint_into(evaluator, artifact_path(workdir, "train-reward", "checkpoint", "render"))
        planner = DiffusionPlanner(model, _schedule(cfg), evaluator=evaluator,
                                   mode=cfg.evaluate.planner_mode,
                                   sample_count=cfg.evaluate.sample_count)
    ep_cfg = EpisodeConfig(duration=cfg.evaluate.duration, replan_period=cfg.evaluate.replan_period,
                           seed=cfg.seed)
    metrics, trace = run_episode(planner, log, ep_cfg, cfg.world)
    out = workdir / "renders" / f"{log.scenario_id}_{args.checkpoint}"
    frames = render_episode(trace, log, out)
    print(f"render: {len(frames)} frames -> {out} (score {metrics.score:.3f})")


def cmd_serve_labeler(cfg: PipelineConfig, args) -> None:
    import uvicorn

    from .prefdata.service import LabelQueue, make_app

    workdir = Path(cfg.workdir)
    prefs_dir = workdir / "prefs"
    queue = LabelQueue(prefs_dir / "records.jsonl", prefs_dir / "pending.jsonl",
                       claim_timeout=cfg.labeler.claim_timeout)
    static = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = make_app(queue, static_dir=static if static.is_dir() else None)
    print(f"serve-labeler: {queue.remaining()} pending pairs on "
          f"http://{cfg.labeler.host}:{cfg.labeler.port}")
    uvicorn.run(app, host=cfg.labeler.host, port=cfg.labeler.port, log_level="warning")


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train-base": cmd_train_base,
    "gen-prefs": cmd_gen_prefs,
    "train-reward": cmd_train_reward,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
    "serve-labeler": cmd_serve_labeler,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffdrive",
        description="Generation-then-evaluation driving pipeline: synthesize data, "
                    "train the diffusion policy, collect preferences, train the "
                    "evaluator, fine-tune with RL, and benchmark closed-loop.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline YAML config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. --set train_base.epochs=5")
        if name == "evaluate":
            p.add_argument("--checkpoint", default="base", choices=["base", "finetuned"])
        if name == "render":
            p.add_argument("--checkpoint", default="replay")
            p.add_argument("--scenario", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config_with_overrides(args.config, args.set)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    workdir = Path(cfg.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    resolved = workdir / "config.resolved.json"
    resolved.write_text(json.dumps(config_to_dict(cfg), sort_keys=True, indent=2) + "\n")
    lock = FileLock(workdir / ".diffdrive.lock")
    try:
        with lock.acquire(timeout=1.0):
            COMMANDS[args.command](cfg, args)
    except Timeout:
        print(f"another diffdrive command is running in {workdir}", file=sys.stderr)
        return 4
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except MissingArtifactError as e:
        print(f"missing artifact: {e}", file=sys.stderr)
        return 3
    except DiffdriveError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except KeyboardInterrupt:
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
