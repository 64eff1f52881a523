"""Run configuration: YAML loading, strict validation, typed section objects."""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .drl import ModelConfig
from .sim import SimConfig, TrainConfig


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "topology": {"dc_count", "area_km", "radius_km", "storage_gb", "ram_gb",
                 "vcpu", "link_bw_mbps", "seed", "dcs", "links"},
    "cluster": {"size_limit"},
    "workload": {"scale", "overrides", "replay_file"},
    "drl": {"branch_width", "hidden_widths", "learning_rate", "momentum",
            "discount", "epsilon_start", "epsilon_end", "epsilon_decay",
            "replay_capacity", "batch_size", "target_sync", "use_target"},
    "sim": {"bw_hold", "count_last_mile", "eager_drop", "actions_per_step",
            "max_steps", "episodes", "seeds", "alloc_bonus", "reward_clip"},
    "train": {"episodes", "dc_choices", "size_limit", "scale_range",
              "round_episodes", "updates_per_round", "area_km", "radius_km",
              "validation_cell", "validation_seed"},
    "sweep": {"dc_counts", "cluster_limits", "scales", "episodes_per_seed"},
    "output": {"directory", "formats"},
}


@dataclass
class RunConfig:
    raw: dict
    topology: dict
    size_limit: int
    scale: float
    replay_file: str | None
    catalog_overrides: dict | None
    model: ModelConfig
    sim: SimConfig
    episodes: int
    seeds: list[int]
    train: TrainConfig
    sweep: dict
    output_dir: str
    output_formats: list[str] = field(default_factory=lambda: ["csv", "json"])


def validate_raw(raw: dict) -> None:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if content is None:
            continue
        if not isinstance(content, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        unknown = set(content) - _SCHEMA[section]
        if unknown:
            raise ConfigError(
                f"unknown keys in section {section!r}: {sorted(unknown)}")


def from_dict(raw: dict) -> RunConfig:
    validate_raw(raw)
    topo = dict(raw.get("topology") or {})
    cluster = raw.get("cluster") or {}
    workload = raw.get("workload") or {}
    drl_cfg = dict(raw.get("drl") or {})
    sim_cfg = dict(raw.get("sim") or {})
    train_cfg = dict(raw.get("train") or {})
    sweep_cfg = dict(raw.get("sweep") or {})
    output = raw.get("output") or {}

    episodes = int(sim_cfg.pop("episodes", 3))
    seeds = [int(s) for s in sim_cfg.pop("seeds", [0])]
    if "hidden_widths" in drl_cfg:
        drl_cfg["hidden_widths"] = tuple(drl_cfg["hidden_widths"])
    try:
        model = ModelConfig(**drl_cfg)
        sim = SimConfig(**sim_cfg)
        if "dc_choices" in train_cfg:
            train_cfg["dc_choices"] = tuple(train_cfg["dc_choices"])
        if "scale_range" in train_cfg:
            train_cfg["scale_range"] = tuple(train_cfg["scale_range"])
        if train_cfg.get("validation_cell") is not None:
            train_cfg["validation_cell"] = tuple(train_cfg["validation_cell"])
        # training keeps the allocation shaping bonus unless explicitly set;
        # shaping only touches recorded transitions, never reported rewards
        train_sim_cfg = dict(sim_cfg)
        train_sim_cfg.setdefault("alloc_bonus", 1.0)
        train_sim_cfg.setdefault("reward_clip", 2.0)
        train = TrainConfig(model=model, sim=SimConfig(**train_sim_cfg),
                            **train_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    return RunConfig(
        raw=raw,
        topology=topo,
        size_limit=int(cluster.get("size_limit", 4)),
        scale=float(workload.get("scale", 1.0)),
        replay_file=workload.get("replay_file"),
        catalog_overrides=workload.get("overrides"),
        model=model,
        sim=sim,
        episodes=episodes,
        seeds=seeds,
        train=train,
        sweep=sweep_cfg,
        output_dir=str(output.get("directory", "out")),
        output_formats=list(output.get("formats", ["csv", "json"])),
    )


def load(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return from_dict(raw)


def resolved_snapshot(cfg: RunConfig, seed_override: int | None = None) -> dict:
    """Fully resolved config for byte-identical reruns."""
    snap = {
        "topology": dict(cfg.topology),
        "cluster": {"size_limit": cfg.size_limit},
        "workload": {"scale": cfg.scale,
                     **({"replay_file": cfg.replay_file} if cfg.replay_file else {}),
                     **({"overrides": cfg.catalog_overrides}
                        if cfg.catalog_overrides else {})},
        "drl": {
            "branch_width": cfg.model.branch_width,
            "hidden_widths": list(cfg.model.hidden_widths),
            "learning_rate": cfg.model.learning_rate,
            "momentum": cfg.model.momentum,
            "discount": cfg.model.discount,
            "epsilon_start": cfg.model.epsilon_start,
            "epsilon_end": cfg.model.epsilon_end,
            "epsilon_decay": cfg.model.epsilon_decay,
            "replay_capacity": cfg.model.replay_capacity,
            "batch_size": cfg.model.batch_size,
            "target_sync": cfg.model.target_sync,
            "use_target": cfg.model.use_target,
        },
        "sim": {
            "bw_hold": cfg.sim.bw_hold,
            "count_last_mile": cfg.sim.count_last_mile,
            "eager_drop": cfg.sim.eager_drop,
            "actions_per_step": cfg.sim.actions_per_step,
            "max_steps": cfg.sim.max_steps,
            "alloc_bonus": cfg.train.sim.alloc_bonus,
            "reward_clip": cfg.train.sim.reward_clip,
            "episodes": cfg.episodes,
            "seeds": list(cfg.seeds),
        },
        "train": {
            "episodes": cfg.train.episodes,
            "dc_choices": list(cfg.train.dc_choices),
            "size_limit": cfg.train.size_limit,
            "scale_range": list(cfg.train.scale_range),
            "round_episodes": cfg.train.round_episodes,
            "updates_per_round": cfg.train.updates_per_round,
            "area_km": cfg.train.area_km,
            "radius_km": cfg.train.radius_km,
            "validation_cell": (None if cfg.train.validation_cell is None
                                else list(cfg.train.validation_cell)),
            "validation_seed": cfg.train.validation_seed,
        },
        "sweep": dict(cfg.sweep),
        "output": {"directory": cfg.output_dir, "formats": cfg.output_formats},
    }
    if seed_override is not None:
        snap["sim"]["seeds"] = [seed_override]
    return snap
