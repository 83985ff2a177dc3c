"""Experiment configuration: one section per module plus the master seed.

Files are TOML or JSON (chosen by extension). Unknown sections or keys are
rejected, and ``dump`` followed by ``load`` returns an equal config.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

from ._io import atomic_write_text
from .control import ControlConfig
from .env import EnvConfig
from .errors import ParseError, ValidationError
from .randomization import RandomizationConfig
from .reward import RewardConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PlannerConfig:
    damping: float = 0.05
    ik_iters: int = 300
    ik_tol: float = 1e-5
    w_position: float = 1.0
    w_rotation: float = 0.3
    w_smooth: float = 0.05
    w_limit: float = 10.0
    w_collision: float = 30.0
    collision_activation: float = 0.02
    max_iters: int = 200
    tol: float = 1e-10
    table_z: float = 0.6

    def __post_init__(self):
        if not self.damping > 0:
            raise ValidationError("planner.damping must be positive")
        for name in ("w_position", "w_rotation", "w_smooth", "w_limit", "w_collision", "collision_activation"):
            if getattr(self, name) < 0:
                raise ValidationError(f"planner.{name} must be non-negative")
        if self.ik_iters < 0 or self.max_iters < 0:
            raise ValidationError("planner iteration budgets must be non-negative")


@dataclass(frozen=True)
class EvalConfig:
    success_tolerance: float = 0.02  # m
    step_budget: int = 600
    source_hz: float = 30.0
    out_hz: float = 3.0
    liftoff_threshold: float = 0.10  # m

    def __post_init__(self):
        if not self.success_tolerance > 0:
            raise ValidationError("eval.success_tolerance must be positive")
        if self.step_budget <= 0:
            raise ValidationError("eval.step_budget must be positive")
        if not 0 < self.out_hz <= self.source_hz:
            raise ValidationError("eval.out_hz must be in (0, source_hz]")


SECTIONS = {
    "env": EnvConfig,
    "control": ControlConfig,
    "reward": RewardConfig,
    "dr": RandomizationConfig,
    "planner": PlannerConfig,
    "eval": EvalConfig,
}


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    dr: RandomizationConfig = field(default_factory=RandomizationConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        out = {"schema_version": CONFIG_SCHEMA_VERSION, "seed": self.seed}
        for name in SECTIONS:
            sec = dataclasses.asdict(getattr(self, name))
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out


def _build_section(name: str, cls, values) -> object:
    if not isinstance(values, dict):
        raise ValidationError(f"section [{name}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - set(fields))
    if unknown:
        raise ValidationError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    kwargs = {}
    defaults = cls()
    for key, value in values.items():
        default = getattr(defaults, key)
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)) or len(value) != len(default):
                raise ValidationError(f"{name}.{key} must be a list of {len(default)} numbers")
            value = tuple(float(v) for v in value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ValidationError(f"{name}.{key} must be true or false")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValidationError(f"{name}.{key} must be an integer")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"{name}.{key} must be a number")
            value = float(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValidationError("config must be a table")
    unknown = sorted(set(data) - set(SECTIONS) - {"seed", "schema_version"})
    if unknown:
        raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
    version = data.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ValidationError(f"unsupported config schema_version {version}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ValidationError("seed must be a non-negative integer")
    kwargs = {name: _build_section(name, cls, data[name]) for name, cls in SECTIONS.items() if name in data}
    return ExperimentConfig(seed=seed, **kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    try:
        return config_from_dict(data)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def dumps_config(config: ExperimentConfig, fmt: str = "toml") -> str:
    data = config.to_dict()
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    if fmt == "toml":
        return tomli_w.dumps(data)
    raise ValidationError(f"unknown config format {fmt!r}")


def dump_config(config: ExperimentConfig, path) -> None:
    fmt = "json" if Path(path).suffix == ".json" else "toml"
    atomic_write_text(path, dumps_config(config, fmt))
