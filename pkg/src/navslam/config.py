"""Run configuration: defaults, named presets, YAML loading, validation.

The configuration is a two-level mapping (section -> key -> value).  Unknown
keys are rejected so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import copy
from pathlib import Path

import yaml

from .storage import atomic_write_text


class ConfigError(ValueError):
    """Configuration failed to parse or validate."""


DEFAULTS: dict = {
    "seed": 0,
    "world": {
        "path": None,              # file path or bundled name; CLI --world overrides
        "robot_radius": 0.15,      # meters
        "lidar_noise_sigma": 0.0,  # meters, additive Gaussian on ranges
    },
    "robot": {
        "dt": 0.1,                 # control period, 10 Hz
    },
    "odom": {
        "alpha1": 0.05,
        "alpha2": 0.05,
        "alpha3": 0.01,
        "alpha4": 0.01,
    },
    "pf": {
        "num_particles": 30,
        "neff_fraction": 0.5,
        "sigma_hit": 0.1,
        "floor": 0.05,
    },
    "grid": {
        "resolution": 0.05,
        "l_occ": 0.85,
        "l_free": -0.4,
        "l_max": 10.0,
        "occupied_threshold": 0.65,
        "publish_threshold": 0.25,
    },
    "confidence": {
        "mode": "geometric",       # or "product"
    },
    "reward": {
        "mode": "dense",           # or "shaped"
        "r_reached": 100.0,
        "r_crashed": -100.0,
        "decay_rate": 0.35,
        "d_min": 0.3,
        "fov_range": 2.0,
    },
    "nn": {
        "hidden": [512, 512, 512],
        "l2_decoupled": False,
    },
    "ddpg": {
        "gamma": 0.99,
        "tau": 0.001,
        "lr_actor": 1.0e-4,
        "lr_critic": 1.0e-3,
        "l2_critic": 1.0e-2,
        "buffer_capacity": 100_000,
        "batch_size": 64,
        "warmup": 1000,
        "ou_theta": 0.15,
        "ou_sigma": 0.2,
        "ou_sigma_decay": 1.0,     # per-episode multiplier; 1.0 = constant noise
        "timeout_bootstrap": True,  # treat timeouts as non-terminal for the target
    },
    "train": {
        "episodes": 2000,
        "max_steps": 1000,
        "checkpoint_every": 100,
        "window": 100,             # rolling window for success/collision ratios
        "reset_map_per_episode": False,
        "log_trajectories": False,
    },
    "eval": {
        "max_steps": 300,
        "n_targets": 100,
        "workers": 1,
    },
}

PRESETS: dict = {
    # full-scale configuration: 3x512 networks, long training
    "paper": {},
    # desk-scale configuration: small networks, minutes not hours
    "desk": {
        "nn": {"hidden": [64, 64, 64]},
        "train": {"episodes": 300, "max_steps": 300, "checkpoint_every": 100},
        "eval": {"max_steps": 300},
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def merge_config(base: dict, override: dict, _path: str = "") -> dict:
    """Recursively merge override into a copy of base; unknown keys fail."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        dotted = f"{_path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {dotted}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {dotted} must be a section")
            out[key] = merge_config(base[key], value, _path=f"{dotted}.")
        else:
            out[key] = value
    return out


def _check_type(dotted: str, value, template) -> None:
    if template is None or value is None:
        return
    if isinstance(template, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {dotted} must be a boolean")
    elif isinstance(template, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {dotted} must be a number")
    elif isinstance(template, str):
        if not isinstance(value, str):
            raise ConfigError(f"config key {dotted} must be a string")
    elif isinstance(template, list):
        if not isinstance(value, list):
            raise ConfigError(f"config key {dotted} must be a list")


def validate_config(cfg: dict) -> dict:
    """Check cfg against the schema; returns cfg for chaining."""
    for section, keys in cfg.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config key: {section}")
        if isinstance(DEFAULTS[section], dict):
            if not isinstance(keys, dict):
                raise ConfigError(f"config key {section} must be a section")
            for key, value in keys.items():
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown config key: {section}.{key}")
                _check_type(f"{section}.{key}", value, DEFAULTS[section][key])
        else:
            _check_type(section, keys, DEFAULTS[section])
    if cfg["confidence"]["mode"] not in ("geometric", "product"):
        raise ConfigError("confidence.mode must be 'geometric' or 'product'")
    if cfg["reward"]["mode"] not in ("dense", "shaped"):
        raise ConfigError("reward.mode must be 'dense' or 'shaped'")
    return cfg


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return raw


def effective_config(*, preset: str | None = None, config_path: str | Path | None = None,
                     overrides: dict | None = None) -> dict:
    """Defaults, then preset, then config file, then explicit overrides."""
    cfg = default_config()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (have: {', '.join(PRESETS)})")
        cfg = merge_config(cfg, PRESETS[preset])
    if config_path is not None:
        cfg = merge_config(cfg, load_config(config_path))
    if overrides:
        cfg = merge_config(cfg, overrides)
    return validate_config(cfg)


def dump_config(cfg: dict, path: str | Path) -> None:
    atomic_write_text(path, yaml.safe_dump(cfg, sort_keys=True))
