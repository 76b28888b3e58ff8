"""Pipeline configuration: one YAML file with per-stage sections, strict
unknown-key rejection, and a canonical hash recorded in every artifact."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .world.scene import WorldParams
from .world.synth import TEMPLATES


@dataclass
class DataConfig:
    n_scenarios: int = 200
    pref_scenarios: int = 100
    bench_scenarios: int = 50
    templates: list[str] = field(default_factory=lambda: list(TEMPLATES))
    train_future_len: int = 10
    bench_future_len: int = 30


@dataclass
class ModelConfig:
    dim: int = 64
    heads: int = 2
    enc_layers: int = 2
    dec_layers: int = 2
    diffusion_steps: int = 10
    ffn_mult: int = 4


@dataclass
class EvaluatorModelConfig:
    dim: int = 64
    heads: int = 2
    enc_layers: int = 2
    dec_layers: int = 2
    ffn_mult: int = 4


@dataclass
class TrainBaseConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 2e-4
    lr_decay: float = 0.95
    lr_decay_every: int = 1000
    weight_decay: float = 1e-4
    val_fraction: float = 0.1


@dataclass
class PrefDataConfig:
    pairs_per_scenario: int = 20
    anchor_count: int = 32
    discrepancy_threshold: float = 1.0
    judge: str = "oracle"  # oracle | vlm | human
    guidance_strength: float = 0.1

    def __post_init__(self):
        if self.judge not in ("oracle", "vlm", "human"):
            raise ConfigError(f"prefdata.judge must be oracle, vlm, or human, got {self.judge!r}")


@dataclass
class TrainRewardConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 2e-4
    weight_decay: float = 1e-4
    aux_weight: float = 0.5
    val_fraction: float = 0.15


@dataclass
class FinetuneStageConfig:
    reg_weight: float = 10.0
    clip: float = 0.01
    samples: int = 32
    lr: float = 1e-5
    steps: int = 1000
    iters: int = 5
    weight_decay: float = 0.0
    checkpoint_every: int = 100


@dataclass
class EvaluateConfig:
    duration: float = 15.0
    replan_period: float = 1.0
    planner_mode: str = "single"
    sample_count: int = 16

    def __post_init__(self):
        if self.planner_mode not in ("single", "multi"):
            raise ConfigError(f"evaluate.planner_mode must be single or multi")


@dataclass
class VlmClientConfig:
    base_url: str = ""
    api_key_env: str = "VLM_API_KEY"
    model: str = ""
    timeout: float = 30.0
    images_enabled: bool = False


@dataclass
class LabelerConfig:
    host: str = "127.0.0.1"
    port: int = 8008
    claim_timeout: float = 120.0


@dataclass
class PipelineConfig:
    seed: int = 0
    workdir: str = "runs/default"
    world: WorldParams = field(default_factory=WorldParams)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    evaluator: EvaluatorModelConfig = field(default_factory=EvaluatorModelConfig)
    train_base: TrainBaseConfig = field(default_factory=TrainBaseConfig)
    prefdata: PrefDataConfig = field(default_factory=PrefDataConfig)
    train_reward: TrainRewardConfig = field(default_factory=TrainRewardConfig)
    finetune: FinetuneStageConfig = field(default_factory=FinetuneStageConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    vlm: VlmClientConfig = field(default_factory=VlmClientConfig)
    labeler: LabelerConfig = field(default_factory=LabelerConfig)


def _build(cls, doc: dict, path: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(doc).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        where = f"{path}.{sorted(unknown)[0]}" if path else sorted(unknown)[0]
        raise ConfigError(f"unknown config key: {where}")
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name in known:
        if name not in doc:
            continue
        val = doc[name]
        sub = f"{path}.{name}" if path else name
        t = hints[name]
        if dataclasses.is_dataclass(t):
            kwargs[name] = _build(t, val, sub)
        else:
            kwargs[name] = _coerce(val, t, sub)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path or 'config'}: {e}") from e


def _coerce(val, t, path: str):
    if t is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{path}: expected number, got {val!r}")
        return float(val)
    if t is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path}: expected int, got {val!r}")
        return val
    if t is bool:
        if not isinstance(val, bool):
            raise ConfigError(f"{path}: expected bool, got {val!r}")
        return val
    if t is str:
        if not isinstance(val, str):
            raise ConfigError(f"{path}: expected str, got {val!r}")
        return val
    if typing.get_origin(t) is list:
        if not isinstance(val, list):
            raise ConfigError(f"{path}: expected list, got {val!r}")
        return list(val)
    raise ConfigError(f"{path}: unsupported config value {val!r}")


def load_config(path) -> PipelineConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
    if doc is None:
        doc = {}
    return _build(PipelineConfig, doc, "")


def apply_overrides(cfg_doc: dict, overrides: list[str]) -> dict:
    """Apply 'a.b.c=value' overrides onto a raw config dict (values YAML-parsed)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, raw = item.split("=", 1)
        node = cfg_doc
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {p} is not a section")
        node[parts[-1]] = yaml.safe_load(raw)
    return cfg_doc


def load_config_with_overrides(path, overrides: list[str]) -> PipelineConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
    if overrides:
        doc = apply_overrides(doc, overrides)
    return _build(PipelineConfig, doc, "")


def config_to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: PipelineConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()
