"""Pipeline configuration: one TOML or JSON file with per-module sections."""

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .refine import RefineConfig

BACKEND_ENV_VAR = "SCENEFIT_INPAINT_CMD"


@dataclass(frozen=True)
class AlignSection:
    max_iters: int = 50
    convergence_eps: float = 1e-6
    ref_view_indices: tuple = (0, 2, 5)


@dataclass(frozen=True)
class TrajectorySection:
    key_count: int = 6
    rho_max: float = 0.05  # radians per step, half-angle convention


@dataclass(frozen=True)
class MasksSection:
    dilation_px: int = 3
    shadow_px: int = 2


@dataclass(frozen=True)
class ScheduleSection:
    length: int = 33
    overlap: int = 9
    prompt: str = ""
    backend: str = "mock:identity"
    retries: int = 2


@dataclass(frozen=True)
class EvalSection:
    voxel_res: int = 128


@dataclass(frozen=True)
class PipelineConfig:
    scene_dir: str = ""
    out_dir: str = ""
    seed: int = 0
    align: AlignSection = field(default_factory=AlignSection)
    refine: RefineConfig = field(default_factory=RefineConfig)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    masks: MasksSection = field(default_factory=MasksSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def backend_spec(self) -> str:
        """Backend command, overridable through the environment."""
        return os.environ.get(BACKEND_ENV_VAR, self.schedule.backend)


def _build(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{where}]")
    coerced = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        if isinstance(v, list):
            v = tuple(v)
        coerced[f.name] = v
    return cls(**coerced)


def config_from_dict(data: dict) -> PipelineConfig:
    sections = {
        "align": AlignSection,
        "refine": RefineConfig,
        "trajectory": TrajectorySection,
        "masks": MasksSection,
        "schedule": ScheduleSection,
        "eval": EvalSection,
    }
    kwargs = {}
    for key, value in data.items():
        if key in sections:
            if not isinstance(value, dict):
                raise ConfigError(f"section [{key}] must be a table/object")
            kwargs[key] = _build(sections[key], value, key)
        elif key in ("scene_dir", "out_dir", "seed"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown top-level config key {key!r}")
    cfg = PipelineConfig(**kwargs)
    cfg.refine.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    """Parse a .toml or .json config file into a PipelineConfig."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ImportError:  # python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text)
    elif path.suffix.lower() == ".json":
        data = json.loads(text)
    else:
        raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table/object")
    return config_from_dict(data)
