"""Run configuration: one YAML file driving data, model, and training.

Every field has a code-level default, so an empty file is a valid config;
the file only lists overrides. Unknown keys are rejected with their full
dotted path so typos fail loudly instead of silently training with a
default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .datagen import DatagenConfig
from .model import ModelConfig
from .planner import PlannerConfig
from .trainer import TrainConfig
from .world import WorldConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: DatagenConfig = field(default_factory=DatagenConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    out_dir: str = "runs"


# which fields are themselves nested config sections
_NESTED = {
    (RunConfig, "data"): DatagenConfig,
    (RunConfig, "model"): ModelConfig,
    (RunConfig, "train"): TrainConfig,
    (DatagenConfig, "world"): WorldConfig,
    (ModelConfig, "planner"): PlannerConfig,
}

_TUPLE_FIELDS = {(DatagenConfig, "hop_range"), (DatagenConfig, "n_nodes_range")}


def _build(cls, raw: dict, path: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got "
                          f"{type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        where = [f"{path}.{k}" if path else k for k in unknown]
        raise ConfigError(f"unknown config key(s): {', '.join(where)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in raw:
            continue
        sub_path = f"{path}.{f.name}" if path else f.name
        value = raw[f.name]
        nested = _NESTED.get((cls, f.name))
        if nested is not None:
            kwargs[f.name] = _build(nested, value, sub_path)
        elif (cls, f.name) in _TUPLE_FIELDS:
            kwargs[f.name] = tuple(value) if value is not None else None
        else:
            kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, RuntimeError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def config_from_dict(raw: dict) -> RunConfig:
    return _build(RunConfig, raw, "")


def load_config(path: str | None) -> RunConfig:
    """Parse a YAML config file; ``None`` gives all defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(raw)


def config_to_dict(cfg: RunConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["data"]["hop_range"] = list(out["data"]["hop_range"])
    if out["data"]["n_nodes_range"] is not None:
        out["data"]["n_nodes_range"] = list(out["data"]["n_nodes_range"])
    return out


def save_config_snapshot(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)
