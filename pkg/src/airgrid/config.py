"""Run configuration: a single YAML file holds every default; the CLI only
overrides pollutant, seed and paths."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import InvalidInputError
from .features import FeatureConfig
from .network import ModelConfig
from .synth import SynthConfig
from .training import TrainConfig

POLLUTANT_CHOICES = ("NO2", "O3", "PM25")


@dataclass(frozen=True)
class RunConfig:
    pollutant: str = "NO2"
    split_seed: int = 0
    data_dir: str = "runs/data"
    out_dir: str = "runs/out"
    synth: SynthConfig = field(default_factory=SynthConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    missing_ratios: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7)
    baseline_k: int = 3

    def __post_init__(self):
        if self.pollutant not in POLLUTANT_CHOICES:
            raise InvalidInputError(
                f"pollutant must be one of {POLLUTANT_CHOICES}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise InvalidInputError(
            f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = dict(data)
    for f in dataclasses.fields(cls):
        if f.name in kwargs and isinstance(kwargs[f.name], list):
            kwargs[f.name] = tuple(kwargs[f.name])
    return cls(**kwargs)


def load_config(path) -> RunConfig:
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise InvalidInputError("config file must be a mapping")
    sections = {
        "synth": SynthConfig, "features": FeatureConfig,
        "model": ModelConfig, "train": TrainConfig,
    }
    kwargs = {}
    for key, value in raw.items():
        if key in sections:
            kwargs[key] = _build(sections[key], value or {})
        else:
            kwargs[key] = tuple(value) if isinstance(value, list) else value
    return _build(RunConfig, kwargs)


def dump_default_config(path) -> None:
    cfg = RunConfig()
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
