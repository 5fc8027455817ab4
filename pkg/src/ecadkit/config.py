"""Run configuration loaded from a TOML file; unknown keys are rejected."""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_VAR = "ECAD_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # kernel
    chord_tol_rel: float = 0.005
    eps_join: float = 1e-6
    # dataset filter
    max_tokens: int = 1536
    # rendering
    seed: int = 0
    max_angle_deg: float = 15.0
    width: int = 640
    height: int = 400
    margin: float = 0.05
    # scoring
    normal_threshold_deg: float = 45.0
    distance_threshold: float = 0.25
    loop_points: int = 256
    time_budget_s: float = 30.0
    max_steps: int = 1000
    # pipeline
    workers: int = 1
    annotate_cmd: str | None = None

    def __post_init__(self):
        positive = ("chord_tol_rel", "eps_join", "max_tokens", "width", "height",
                    "normal_threshold_deg", "distance_threshold", "loop_points",
                    "time_budget_s", "max_steps", "workers")
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if not 0 <= self.max_angle_deg < 90:
            raise ConfigError("max_angle_deg must be in [0, 90)")
        if not 0 <= self.margin < 0.5:
            raise ConfigError("margin must be in [0, 0.5)")
        if self.annotate_cmd is not None and not isinstance(self.annotate_cmd, str):
            raise ConfigError("annotate_cmd must be a string")

    def updated(self, **overrides) -> "Config":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


_SECTIONS = ("kernel", "filter", "render", "scorer", "pipeline")


def _coerce(name: str, value):
    f = {f.name: f for f in fields(Config)}[name]
    default = f.default
    if isinstance(default, bool) or f.type == "bool":
        return bool(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    return value


def config_from_mapping(data: dict) -> Config:
    known = {f.name for f in fields(Config)}
    flat = {}
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in _SECTIONS:
                raise ConfigError(f"unknown config section [{key}]")
            items = value.items()
        else:
            items = [(key, value)]
        for k, v in items:
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            flat[k] = _coerce(k, v)
    return Config(**flat)


def load_config(path: str | None = None) -> Config:
    """Load from path, else from $ECAD_CONFIG, else defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return Config()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return config_from_mapping(data)
