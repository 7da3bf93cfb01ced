"""Experiment configuration documents.

Configs are JSON objects carrying ``schema_version``. All lengths are in
metres. Unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from typing import Any, Dict

from .model import CrystalSpec, PumpBeam
from .simulator import CameraConfig, OpticsConfig, OpticsMode, SourceConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid or malformed configuration."""


@dataclass(frozen=True)
class PumpConfig:
    waist_x: float = 766e-6
    waist_y: float = 766e-6
    wavelength: float = 405e-9

    def beam(self) -> PumpBeam:
        return PumpBeam(self.waist_x, self.waist_y)


@dataclass(frozen=True)
class CrystalConfig:
    length: float = 5e-3
    alpha: float = 0.455


@dataclass(frozen=True)
class FrameCounts:
    dark: int = 20000
    near: int = 50000
    far: int = 50000

    def __post_init__(self):
        for name in ("dark", "near", "far"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 2:
                raise ConfigError(f"frames.{name} must be an integer >= 2, got {v!r}")


def _near():
    return OpticsConfig(mode=OpticsMode.NEAR_FIELD)


def _far():
    return OpticsConfig(mode=OpticsMode.FAR_FIELD)


@dataclass(frozen=True)
class ExperimentConfig:
    pump: PumpConfig = field(default_factory=PumpConfig)
    crystal: CrystalConfig = field(default_factory=CrystalConfig)
    camera: CameraConfig = field(default_factory=CameraConfig)
    near: OpticsConfig = field(default_factory=_near)
    far: OpticsConfig = field(default_factory=_far)
    source: SourceConfig = field(default_factory=SourceConfig)
    frames: FrameCounts = field(default_factory=FrameCounts)
    seed: int = 1

    def __post_init__(self):
        if self.near.mode is not OpticsMode.NEAR_FIELD:
            raise ConfigError("near pass must use near-field optics")
        if self.far.mode is not OpticsMode.FAR_FIELD:
            raise ConfigError("far pass must use far-field optics")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        # surfaces the model invariants at load time
        self.crystal_spec()
        self.pump.beam()

    def crystal_spec(self) -> CrystalSpec:
        return CrystalSpec(self.crystal.length, self.crystal.alpha, self.pump.wavelength)

    def with_beta(self, beta: float) -> "ExperimentConfig":
        if not 0 < beta <= 1:
            raise ConfigError(f"beta must lie in (0, 1], got {beta}")
        pump = dataclasses.replace(self.pump, waist_y=beta * self.pump.waist_x)
        return dataclasses.replace(self, pump=pump)

    def override(self, seed=None, frames=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        if frames is not None:
            cfg = dataclasses.replace(cfg, frames=dataclasses.replace(cfg.frames, near=frames, far=frames))
        return cfg


def to_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        where = f"{path}.{name}" if path else name
        kwargs[name] = _build(sub, value, where) if sub else value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from None


_NESTED = {
    (ExperimentConfig, "pump"): PumpConfig,
    (ExperimentConfig, "crystal"): CrystalConfig,
    (ExperimentConfig, "camera"): CameraConfig,
    (ExperimentConfig, "near"): OpticsConfig,
    (ExperimentConfig, "far"): OpticsConfig,
    (ExperimentConfig, "source"): SourceConfig,
    (ExperimentConfig, "frames"): FrameCounts,
}


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    data = dict(data)
    version = data.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r}")
    return _build(ExperimentConfig, data, "")


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, **to_dict(cfg)}


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2)
        fh.write("\n")
