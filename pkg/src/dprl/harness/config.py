"""Nested run configuration with dotted-path overrides.

Every key has a default below; overrides may only touch existing keys.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

DEFAULTS = {
    "algo": "sac",
    "seed": 0,
    "frames": 300_000,
    "env": {"id": "pendulum", "num_envs": 1, "frame_skip": 1},
    "eval": {"interval": 10_000, "episodes": 10, "bon_n": 0, "tv_samples": 0},
    "train": {
        "warmup": 5_000,
        "batch_size": 256,
        "buffer_size": 1_000_000,
        "update_every": 1,
        "updates_per_step": 1,
        "gamma": 0.99,
        "stop_return": None,
    },
    "critic": {
        "hidden": [256, 256],
        "activation": "relu",
        "ensemble_size": 2,
        "ema": 0.005,
        "lr": 3e-4,
        "use_min": True,
    },
    "actor": {
        "hidden": [256, 256, 256],
        "activation": "mish",
        "embed_dim": 64,
        "lr": 3e-4,
        "max_grad_norm": None,
        "gaussian_hidden": [256, 256],
        "gaussian_activation": "relu",
    },
    "diffusion": {
        "steps": 20,
        "schedule": "cosine",
        "mode": "sde",
        "eta": 1.0,
        "min_std": 0.0,
        "head": "epsilon",
    },
    "guidance": {
        "lam": 0.1,
        "reference": "uniform",
        "num_samples": 10,
        "num_reverse_samples": 500,
        "num_mc_samples": 8,
        "num_train_samples": 64,
        "num_behavior_samples": 2,
        "entropy_coef": 0.01,
        "clip_eps": 0.2,
        "target_kl": 2.5,
        "ref_refresh_interval": 1000,
        "weighting": "head",
        "qsm_target": "mixed",
    },
    "sac": {"init_alpha": 1.0, "alpha_lr": 3e-4, "auto_alpha": True},
    "dacer": {
        "init_alpha": 0.1,
        "alpha_lr": 0.03,
        "alpha_interval": 10_000,
        "noise_scaler": 0.1,
        "entropy_num_samples": 200,
        "entropy_states": 4,
        "actor_every": 2,
    },
    "dpmd": {"kl_interval": 100, "kl_batch": 32},
    "edp": {"q_weight": 1.0, "bc_weight": 1.0},
    "pg": {
        "rollout_length": 2048,
        "epochs": 4,
        "num_minibatches": 4,
        "clip_eps": 0.2,
        "fpo_clip_eps": 0.05,
        "clamp_ratio": True,
        "entropy_coef": 1e-4,
        "gae_lambda": 0.95,
        "lr": 3e-4,
        "value_lr": 1e-3,
        "value_hidden": [64, 64],
        "max_grad_norm": 1.0,
        "init_log_std": -0.5,
        "normalize_advantages": True,
    },
    "offline": {"dataset": None},
    "log": {"checkpoint": True},
}


class ConfigError(ValueError):
    pass


def _merge(base, upd, path=""):
    for k, v in upd.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} is a section; give a mapping")
            _merge(base[k], v, where + ".")
        else:
            base[k] = v
    return base


def parse_value(text):
    """Interpret an override string as YAML (numbers, bools, lists, null)."""
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError:
        return text
    if isinstance(value, str):
        # YAML 1.1 reads "1e-3" as a string
        try:
            return float(value)
        except ValueError:
            pass
    return value


def set_path(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    if isinstance(node[keys[-1]], dict):
        raise ConfigError(f"{dotted!r} is a section, not a value")
    node[keys[-1]] = value
    return cfg


def get_path(cfg, dotted):
    node = cfg
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[k]
    return node


def make_config(overrides=None, sets=(), base=None):
    """Defaults, then a nested override mapping, then ``key=value`` strings."""
    cfg = copy.deepcopy(DEFAULTS)
    if base is not None:
        _merge(cfg, copy.deepcopy(base))
    if overrides:
        _merge(cfg, overrides)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like dotted.key=value")
        key, text = item.split("=", 1)
        set_path(cfg, key.strip(), parse_value(text))
    validate(cfg)
    return cfg


def load_config(path, sets=()):
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    return make_config(data, sets)


def validate(cfg):
    from ..envsim import ENV_IDS
    from ..genmodel import HEADS, MODES, SCHEDULES
    from ..policyopt import ALGORITHMS

    if cfg["algo"] not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {cfg['algo']!r}")
    if cfg["env"]["id"] not in ENV_IDS:
        raise ConfigError(f"unknown env {cfg['env']['id']!r}")
    if cfg["frames"] < 0:
        raise ConfigError("frames must be nonnegative")
    if cfg["eval"]["interval"] <= 0 or cfg["eval"]["episodes"] < 1:
        raise ConfigError("eval interval and episodes must be positive")
    if cfg["env"]["frame_skip"] < 1 or cfg["env"]["num_envs"] < 1:
        raise ConfigError("frame_skip and num_envs must be at least 1")
    if cfg["diffusion"]["steps"] < 1:
        raise ConfigError("diffusion.steps must be positive")
    if cfg["guidance"]["lam"] <= 0:
        raise ConfigError("guidance.lam must be positive")
    d = cfg["diffusion"]
    for key, allowed in (("schedule", SCHEDULES), ("mode", MODES), ("head", HEADS)):
        if d[key] not in allowed:
            raise ConfigError(f"diffusion.{key} must be one of {allowed}, got {d[key]!r}")
    if cfg["guidance"]["weighting"] not in ("head", "eps", "none"):
        raise ConfigError("guidance.weighting must be head, eps or none")
    return cfg


def dump_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=True))


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:12]
